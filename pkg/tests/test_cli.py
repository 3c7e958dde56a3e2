import csv
import json

import pytest

from aniscert.app.cli import EXIT_CONFIG, EXIT_OK, EXIT_VERIFICATION, build_parser, main

from .campaigns import write_campaign

CAMPAIGN = dict(dataset="synthetic", synthetic_d=2, synthetic_per_class=15, classifier="linear",
                n0=20, n=300, alpha=0.01, chunk_size=40, holdout=0.2, seed=7)


@pytest.fixture
def campaign(tmp_path):
    return write_campaign(tmp_path / "campaign.cfg", **CAMPAIGN, **{"lambda": 0.5})


def summary_line(output: str) -> dict:
    lines = [line for line in output.splitlines() if line.startswith("SUMMARY ")]
    assert len(lines) == 1
    return json.loads(lines[0][len("SUMMARY "):])


def test_certify_twice_is_byte_identical(campaign, tmp_path, capsys):
    first, second = tmp_path / "first", tmp_path / "second"
    assert main(["--quiet", "certify", "--config", campaign, "--output", str(first)]) == EXIT_OK
    assert main(["--quiet", "certify", "--config", campaign, "--output", str(second)]) == EXIT_OK
    assert (first / "results.csv").read_bytes() == (second / "results.csv").read_bytes()
    assert (first / "curve.csv").read_bytes() == (second / "curve.csv").read_bytes()
    assert summary_line(capsys.readouterr().out)["examples"] == 6


def test_worker_count_does_not_change_results(campaign, tmp_path):
    serial, threaded = tmp_path / "serial", tmp_path / "threaded"
    assert main(["--quiet", "certify", "--config", campaign, "--workers", "1",
                 "--output", str(serial)]) == EXIT_OK
    assert main(["--quiet", "certify", "--config", campaign, "--workers", "3",
                 "--output", str(threaded)]) == EXIT_OK
    assert (serial / "results.csv").read_bytes() == (threaded / "results.csv").read_bytes()


def test_seed_changes_results(campaign, tmp_path):
    main(["--quiet", "certify", "--config", campaign, "--output", str(tmp_path / "a")])
    main(["--quiet", "certify", "--config", campaign, "--seed", "8", "--output", str(tmp_path / "b")])
    assert (tmp_path / "a" / "results.csv").read_bytes() != (tmp_path / "b" / "results.csv").read_bytes()


def test_zero_examples_write_headers(campaign, tmp_path):
    out = tmp_path / "empty"
    assert main(["--quiet", "certify", "--config", campaign, "--max-examples", "0",
                 "--output", str(out)]) == EXIT_OK
    assert len((out / "results.csv").read_text().splitlines()) == 1
    assert len((out / "curve.csv").read_text().splitlines()) == 1


def test_predict_command(campaign, tmp_path, capsys):
    out = tmp_path / "predict"
    assert main(["--quiet", "predict", "--config", campaign, "--output", str(out)]) == EXIT_OK
    assert summary_line(capsys.readouterr().out)["examples"] == 6
    with open(out / "predictions.csv") as f:
        assert len(list(csv.reader(f))) == 7


def test_unknown_key_is_config_error(campaign, tmp_path, capsys):
    code = main(["--quiet", "certify", "--config", campaign, "--set", "bogus=1",
                 "--output", str(tmp_path)])
    assert code == EXIT_CONFIG
    assert "bogus" in capsys.readouterr().err


def test_bad_value_names_line(tmp_path, capsys):
    path = write_campaign(tmp_path / "bad.cfg", seed=1, alpha=2)
    assert main(["--quiet", "certify", "--config", path]) == EXIT_CONFIG
    assert "line 2" in capsys.readouterr().err


def test_nn_without_model_is_config_error(campaign, tmp_path):
    assert main(["--quiet", "certify", "--config", campaign, "--set", "classifier=nn",
                 "--output", str(tmp_path)]) == EXIT_CONFIG


def test_missing_config_file(tmp_path):
    assert main(["--quiet", "certify", "--config", str(tmp_path / "absent.cfg")]) == EXIT_CONFIG


def test_train_then_certify(campaign, tmp_path, capsys):
    train_dir = tmp_path / "train"
    assert main(["--quiet", "train", "--config", campaign, "--output", str(train_dir),
                 "--set", "classifier=nn", "--set", "hidden=8", "--set", "npg=dataset_wise",
                 "--set", "epochs=3", "--set", "batch_size=12"]) == EXIT_OK
    summary = summary_line(capsys.readouterr().out)
    assert summary["epochs"] == 3
    assert 0.0 <= summary["clean_accuracy"] <= 1.0

    certify_dir = tmp_path / "certify"
    assert main(["--quiet", "certify", "--config", campaign, "--output", str(certify_dir),
                 "--set", "classifier=nn", "--set", f"model={train_dir / 'classifier.ckpt'}",
                 "--set", "npg=dataset_wise",
                 "--set", f"npg_checkpoint={train_dir / 'npg.ckpt'}"]) == EXIT_OK
    assert len((certify_dir / "results.csv").read_text().splitlines()) == 7


def test_sign_defect_fails_verification(capsys):
    code = main(["--quiet", "verify", "--sign-bug", "--only", "transformation_equivalence"])
    assert code == EXIT_VERIFICATION
    assert capsys.readouterr().out.startswith("FAIL transformation_equivalence")


def test_single_check_passes(capsys):
    assert main(["--quiet", "verify", "--only", "radius_formulas", "clopper_pearson"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "PASS radius_formulas" in out
    assert "all 2 checks passed" in out


def test_pattern_dump_to_file(tmp_path):
    path = tmp_path / "sigma.csv"
    assert main(["pattern-dump", "--height", "5", "--width", "7", "--p", "linf", "--kappa", "0.5",
                 "--iota", "0.3", "--output", str(path)]) == EXIT_OK
    with open(path) as f:
        rows = [[float(value) for value in row] for row in csv.reader(f)]
    assert len(rows) == 5 and all(len(row) == 7 for row in rows)
    assert rows[2][3] == pytest.approx(0.3)
    assert rows[0][0] == pytest.approx(0.5 * 9 + 0.3)


def test_pattern_dump_to_stdout(capsys):
    assert main(["pattern-dump", "--height", "3", "--width", "3", "--kappa", "0",
                 "--iota", "2"]) == EXIT_OK
    assert capsys.readouterr().out == "2,2,2\n2,2,2\n2,2,2\n"


def test_compare_command(campaign, tmp_path, capsys):
    out = tmp_path / "run"
    main(["--quiet", "certify", "--config", campaign, "--output", str(out)])
    capsys.readouterr()
    results = str(out / "results.csv")
    assert main(["compare", "--candidate", results, "--baseline", results]) == EXIT_OK
    comparison = json.loads(capsys.readouterr().out)
    # isotropic noise: the ALM curve equals the radius curve
    assert comparison["dominance_fraction"] == 1.0
    assert comparison["relative_gain"] == pytest.approx(0.0)


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
