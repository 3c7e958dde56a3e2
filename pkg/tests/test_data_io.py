import math
import struct

import numpy as np
import pytest

from aniscert.app.core.exceptions import ConfigError, EngineParameterError, IdxFormatError, ResultsFormatError
from aniscert.app.data_io import (
    RESULT_COLUMNS, ResultRow, SEED_ENV, diagonal_boundary, downscale, load_campaign_config,
    load_idx, parse_campaign_config, read_curve, read_idx_images, read_idx_labels, read_results,
    row_sizes, synth_gaussians, write_curve, write_idx, write_predictions, write_results
)
from aniscert.app.enums import DatasetSource, NoiseFamily, Norm, Verdict
from aniscert.app.models.data_models import (
    Certificate, CertResult, CurvePoint, ExampleResult
)

from .campaigns import write_campaign


@pytest.fixture
def idx_pair(tmp_path):
    images = np.arange(3 * 4 * 4, dtype=np.uint8).reshape(3, 4, 4) * 5
    labels = np.array([7, 0, 3], dtype=np.uint8)
    images_path, labels_path = str(tmp_path / "images.idx"), str(tmp_path / "labels.idx")
    write_idx(images, labels, images_path, labels_path)
    return images, labels, images_path, labels_path


def test_idx_round_trip(idx_pair):
    images, labels, images_path, labels_path = idx_pair
    np.testing.assert_array_equal(read_idx_images(images_path), images)
    np.testing.assert_array_equal(read_idx_labels(labels_path), labels)


def test_load_idx_scales_pixels(idx_pair):
    images, labels, images_path, labels_path = idx_pair
    dataset = load_idx(images_path, labels_path)
    assert dataset.image_shape == (4, 4)
    assert dataset.d == 16
    np.testing.assert_allclose(dataset.inputs[1], images[1].ravel() / 255.0)
    np.testing.assert_array_equal(dataset.labels, labels)


def test_load_idx_downscales(idx_pair):
    _, _, images_path, labels_path = idx_pair
    dataset = load_idx(images_path, labels_path, downscale_factor=2)
    assert dataset.image_shape == (2, 2)
    assert dataset.d == 4


def test_downscale_averages_blocks():
    images = np.array([[[0.0, 2.0, 4.0], [2.0, 4.0, 6.0], [9.0, 9.0, 9.0]]])
    np.testing.assert_allclose(downscale(images, 2), [[[2.0]]])


def test_idx_bad_magic(tmp_path):
    path = tmp_path / "bad.idx"
    path.write_bytes(struct.pack(">IIII", 0x00000801, 1, 2, 2) + bytes(4))
    with pytest.raises(IdxFormatError, match="bad magic"):
        read_idx_images(str(path))


def test_idx_truncated_payload(tmp_path):
    path = tmp_path / "short.idx"
    path.write_bytes(struct.pack(">IIII", 0x00000803, 2, 2, 2) + bytes(5))
    with pytest.raises(IdxFormatError, match="byte offset 21"):
        read_idx_images(str(path))


def test_idx_truncated_header(tmp_path):
    path = tmp_path / "header.idx"
    path.write_bytes(struct.pack(">I", 0x00000801) + b"\x00\x00")
    with pytest.raises(IdxFormatError, match="truncated"):
        read_idx_labels(str(path))


def test_idx_count_mismatch(tmp_path, idx_pair):
    images, _, images_path, _ = idx_pair
    labels_path = str(tmp_path / "two.idx")
    write_idx(images[:2], np.array([1, 2]), str(tmp_path / "unused.idx"), labels_path)
    with pytest.raises(IdxFormatError):
        load_idx(images_path, labels_path)


def test_synthetic_blobs():
    dataset = synth_gaussians(3, 4, 25, 6.0, seed=1)
    assert len(dataset) == 100
    assert dataset.d == 3
    assert np.all((dataset.inputs >= 0.0) & (dataset.inputs <= 1.0))
    assert sorted(np.bincount(dataset.labels)) == [25, 25, 25, 25]
    again = synth_gaussians(3, 4, 25, 6.0, seed=1)
    np.testing.assert_array_equal(dataset.inputs, again.inputs)


def test_synthetic_blobs_validate_arguments():
    with pytest.raises(EngineParameterError):
        synth_gaussians(2, 1, 10, 1.0)
    with pytest.raises(EngineParameterError):
        synth_gaussians(2, 2, 10, 0.0)


def test_diagonal_boundary_separates_means():
    w, b = diagonal_boundary(4)
    assert np.full(4, 0.2) @ w + b < 0 < np.full(4, 0.8) @ w + b


def certified(example_id, label, predicted, radius, alm):
    cert = Certificate(radius=radius, alm=alm, base_radius=radius, norm=Norm.L2)
    result = CertResult(verdict=Verdict.CERTIFIED, predicted=predicted, p_a_lower=0.99,
                        certificate=cert, n0=10, n=100, alpha=0.001, seed=example_id)
    return ExampleResult(example_id=example_id, true_label=label, result=result)


def abstained(example_id, label):
    result = CertResult(verdict=Verdict.ABSTAIN, p_a_lower=0.25, n0=10, n=100, alpha=0.001,
                        seed=example_id)
    return ExampleResult(example_id=example_id, true_label=label, result=result)


def test_results_file_text(tmp_path):
    path = tmp_path / "results.csv"
    write_results([certified(0, 1, 1, 1.0 / 3.0, 0.5), abstained(1, 0)], str(path))
    assert path.read_text() == (
        ",".join(RESULT_COLUMNS) + "\n"
        "0,1,certified,1,0.99,0.333333333333,0.333333333333,0.5,10,100,0.001,0\n"
        "1,0,abstain,,0.25,,,,10,100,0.001,1\n"
    )


def test_results_round_trip(tmp_path):
    path = str(tmp_path / "results.csv")
    write_results([certified(0, 1, 1, 0.25, 0.75), abstained(1, 0)], path)
    rows = read_results(path)
    assert rows[0] == ResultRow(example_id=0, true_label=1, verdict=Verdict.CERTIFIED, predicted=1,
                                p_a_lower=0.99, base_radius=0.25, radius=0.25, alm=0.75, n0=10,
                                n=100, alpha=0.001, seed=0)
    assert rows[1].predicted is None
    write_results(rows, str(tmp_path / "again.csv"))
    assert (tmp_path / "again.csv").read_text() == (tmp_path / "results.csv").read_text()


def test_empty_results_write_header_only(tmp_path):
    path = tmp_path / "results.csv"
    write_results([], str(path))
    assert path.read_text() == ",".join(RESULT_COLUMNS) + "\n"
    assert read_results(str(path)) == []


def test_results_bad_header(tmp_path):
    path = tmp_path / "results.csv"
    path.write_text("id,label\n")
    with pytest.raises(ResultsFormatError, match="expected header"):
        read_results(str(path))


def test_results_bad_row(tmp_path):
    path = tmp_path / "results.csv"
    path.write_text(",".join(RESULT_COLUMNS) + "\n0,1,certified,1\n")
    with pytest.raises(ResultsFormatError, match="line 2"):
        read_results(str(path))


def test_results_bad_value(tmp_path):
    path = tmp_path / "results.csv"
    path.write_text(",".join(RESULT_COLUMNS) + "\nzero,1,certified,1,0.9,1,1,1,10,100,0.001,0\n")
    with pytest.raises(ResultsFormatError):
        read_results(str(path))


def test_row_sizes(tmp_path):
    path = str(tmp_path / "results.csv")
    write_results([certified(0, 1, 1, 0.25, 0.75), certified(1, 0, 1, 0.5, 0.5), abstained(2, 0)],
                  path)
    rows = read_results(path)
    np.testing.assert_array_equal(row_sizes(rows), [0.25, -np.inf, -np.inf])
    np.testing.assert_array_equal(row_sizes(rows, use_alm=True), [0.75, -np.inf, -np.inf])


def test_curve_round_trip(tmp_path):
    path = str(tmp_path / "curve.csv")
    points = [CurvePoint(threshold=0.0, acc_radius=0.5, acc_alm=0.75),
              CurvePoint(threshold=1.5, acc_radius=0.0, acc_alm=0.25)]
    write_curve(points, path)
    assert read_curve(path) == points


def test_predictions_file(tmp_path):
    path = tmp_path / "predictions.csv"
    write_predictions([1, None], [1, 0], str(path))
    assert path.read_text() == "example_id,true_label,predicted\n0,1,1\n1,0,\n"


def test_config_defaults():
    config = parse_campaign_config("", environ={})
    assert config.dataset == DatasetSource.SYNTHETIC
    assert config.noise == NoiseFamily.GAUSSIAN
    assert config.seed == 0


def test_config_file_keys(tmp_path):
    path = write_campaign(tmp_path / "run.cfg", noise="laplace", **{"lambda": 0.25},
                          norm="l1", hidden="32, 16", n="500")
    config = load_campaign_config(path, environ={})
    assert config.noise == NoiseFamily.LAPLACE
    assert config.scale == 0.25
    assert config.norm == Norm.L1
    assert config.hidden == [32, 16]
    assert config.n == 500


def test_config_comments_and_blank_lines():
    config = parse_campaign_config("# a campaign\n\nseed = 4\n   # indented comment\n", environ={})
    assert config.seed == 4


@pytest.mark.parametrize("text,key,line", [
    ("seed = 1\nbogus = 3\n", "bogus", 2),
    ("seed = 1\nn =\n", "n", 2),
    ("n = 10\nn = 20\n", "n", 2),
    ("seed = 1\nalpha = 0.01\nn0 = 0\n", "n0", 3),
    ("lambda = -1\n", "lambda", 1),
])
def test_config_errors_name_key_and_line(text, key, line):
    with pytest.raises(ConfigError) as info:
        parse_campaign_config(text, environ={})
    assert info.value.key == key
    assert info.value.line == line


def test_config_line_without_equals():
    with pytest.raises(ConfigError) as info:
        parse_campaign_config("seed 4\n", environ={})
    assert info.value.line == 1


def test_config_mnist_needs_images():
    with pytest.raises(ConfigError) as info:
        parse_campaign_config("dataset = mnist\n", environ={})
    assert info.value.key == "images"


def test_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_campaign_config(str(tmp_path / "absent.cfg"), environ={})


def test_seed_precedence():
    text = "seed = 1\n"
    assert parse_campaign_config(text, environ={}).seed == 1
    assert parse_campaign_config(text, environ={SEED_ENV: "2"}).seed == 2
    assert parse_campaign_config(text, overrides={"seed": "3"}, environ={SEED_ENV: "2"}).seed == 3


def test_override_replaces_alias():
    config = parse_campaign_config("lambda = 0.5\n", overrides={"scale": "0.75"}, environ={})
    assert math.isclose(config.scale, 0.75)


def test_override_unknown_key():
    with pytest.raises(ConfigError) as info:
        parse_campaign_config("", overrides={"nope": "1"}, environ={})
    assert info.value.key == "nope"
