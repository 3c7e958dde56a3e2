""" Command-line entry points

    python -m aniscert.app train   --config campaign.cfg
    python -m aniscert.app certify --config campaign.cfg --workers 4
    python -m aniscert.app predict --config campaign.cfg
    python -m aniscert.app verify  [--full] [--only NAME ...]
    python -m aniscert.app pattern-dump --height 28 --width 28 --p l2 --kappa 0.002 --iota 0.5
    python -m aniscert.app compare --candidate a/results.csv --baseline b/results.csv

Campaign keys are the field names of CampaignConfig (see its docstring);
"--set key=value" overrides a file key, and --seed / --workers / --max-examples /
--output are shorthands for the matching keys.

Exit codes: 0 success, 1 config error, 2 runtime error, 3 verification failure.
"""
import argparse
import csv
import json
import logging
import sys
from typing import Dict, List, Optional, Sequence

from pydantic import ValidationError

from .config import configure_logging
from .core.exceptions import AnisCertError, ConfigError, VerificationFailure
from .core.npg import pattern_sigma
from .core.smoothing import compare_curves
from .data_io import load_campaign_config, read_results, row_sizes
from .enums import Norm
from .models.data_models import CheckReport, PatternSpec
from .models.request_models import CampaignConfig
from .service import (
    CampaignCertificationService, JointTrainingService, VerificationServiceFactory
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_VERIFICATION = 3

SHORTHANDS = ("seed", "workers", "max_examples", "output")


def _key_value(text: str):
    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        raise argparse.ArgumentTypeError(f"expected key=value, got '{text}'")
    return key.strip(), value.strip()


def campaign_config(args: argparse.Namespace) -> CampaignConfig:
    overrides: Dict[str, str] = dict(args.set or [])
    for name in SHORTHANDS:
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = str(value)
    return load_campaign_config(args.config, overrides)


def cmd_train(args: argparse.Namespace) -> int:
    service = JointTrainingService(progress=not args.quiet)
    service.train(campaign_config(args))
    return EXIT_OK


def cmd_certify(args: argparse.Namespace) -> int:
    service = CampaignCertificationService(progress=not args.quiet)
    report = service.certify(campaign_config(args))
    print(f"SUMMARY {report.summary.json()}")
    return EXIT_OK


def cmd_predict(args: argparse.Namespace) -> int:
    service = CampaignCertificationService(progress=not args.quiet)
    predictions = service.predict(campaign_config(args))
    abstained = sum(label is None for label in predictions)
    print(f"SUMMARY {json.dumps({'examples': len(predictions), 'abstained': abstained})}")
    return EXIT_OK


def format_report(reports: Sequence[CheckReport]) -> List[str]:
    lines = []
    for report in reports:
        status = "PASS" if report.passed else "FAIL"
        line = f"{status} {report.name:<28} {report.seconds:8.2f}s  {report.detail}"
        if report.standard_error is not None:
            line += f" (standard error {report.standard_error:.2e})"
        lines.append(line)
    return lines


def cmd_verify(args: argparse.Namespace) -> int:
    suite = VerificationServiceFactory.create("oracle", full=args.full, seed=args.seed,
                                              sign_bug=args.sign_bug)
    reports = suite.run(only=args.only)
    for line in format_report(reports):
        print(line)
    failed = [report.name for report in reports if not report.passed]
    if failed:
        raise VerificationFailure(f"{len(failed)} check(s) failed: {', '.join(failed)}")
    print(f"all {len(reports)} checks passed in {sum(r.seconds for r in reports):.2f}s")
    return EXIT_OK


def cmd_pattern_dump(args: argparse.Namespace) -> int:
    """ Writes the sigma map as CSV, one image row per line """
    spec = PatternSpec(norm_p=args.p, kappa=args.kappa, iota=args.iota,
                       height=args.height, width=args.width, target_mean=args.target_mean)
    sigma = pattern_sigma(spec)
    stream = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        writer = csv.writer(stream, lineterminator="\n")
        for row in sigma:
            writer.writerow([f"{value:.12g}" for value in row])
    finally:
        if args.output:
            stream.close()
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    """ Compares two certification campaigns by their certified-accuracy curves """
    candidate = row_sizes(read_results(args.candidate), use_alm=args.candidate_metric == "alm")
    baseline = row_sizes(read_results(args.baseline), use_alm=args.baseline_metric == "alm")
    print(compare_curves(candidate, baseline).json())
    return EXIT_OK


def _campaign_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="flat key = value campaign file")
    parser.add_argument("--seed", type=int, default=None, help="master seed")
    parser.add_argument("--set", action="append", type=_key_value, metavar="KEY=VALUE",
                        help="override a campaign key (repeatable)")
    parser.add_argument("--workers", type=int, default=None, help="concurrent noise chunks")
    parser.add_argument("--max-examples", dest="max_examples", type=int, default=None)
    parser.add_argument("--output", default=None, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aniscert",
                                     description="Anisotropic randomized-smoothing certification")
    parser.add_argument("--log-level", default=None, help="overrides the configured log level")
    parser.add_argument("--quiet", action="store_true", help="no progress bars")
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser("train", help="train a classifier and a noise parameter generator")
    _campaign_arguments(train)
    train.set_defaults(handler=cmd_train)

    certify = commands.add_parser("certify", help="certify a dataset, write results and curves")
    _campaign_arguments(certify)
    certify.set_defaults(handler=cmd_certify)

    predict = commands.add_parser("predict", help="smoothed predictions for a dataset")
    _campaign_arguments(predict)
    predict.set_defaults(handler=cmd_predict)

    verify = commands.add_parser("verify", help="run the oracle verification suite")
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument("--full", action="store_true", help="full-size instance counts and samples")
    verify.add_argument("--only", nargs="+", default=None, metavar="CHECK")
    verify.add_argument("--sign-bug", dest="sign_bug", action="store_true",
                        help="flip the sign of Sigma x in the transformed classifier")
    verify.set_defaults(handler=cmd_verify)

    dump = commands.add_parser("pattern-dump", help="write a sigma pattern as CSV")
    dump.add_argument("--height", type=int, default=28)
    dump.add_argument("--width", type=int, default=28)
    dump.add_argument("--p", type=Norm, default=Norm.L2, choices=list(Norm))
    dump.add_argument("--kappa", type=float, default=1.0)
    dump.add_argument("--iota", type=float, default=1.0)
    dump.add_argument("--target-mean", dest="target_mean", type=float, default=None)
    dump.add_argument("--output", default=None, help="CSV path, stdout when omitted")
    dump.set_defaults(handler=cmd_pattern_dump)

    compare = commands.add_parser("compare", help="compare two results CSVs")
    compare.add_argument("--candidate", required=True)
    compare.add_argument("--baseline", required=True)
    compare.add_argument("--candidate-metric", dest="candidate_metric", default="alm",
                         choices=["radius", "alm"])
    compare.add_argument("--baseline-metric", dest="baseline_metric", default="radius",
                         choices=["radius", "alm"])
    compare.set_defaults(handler=cmd_compare)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except (ConfigError, ValidationError) as e:
        logger.error("configuration error: %s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except VerificationFailure as e:
        logger.error("%s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VERIFICATION
    except (AnisCertError, OSError) as e:
        logger.error("%s: %s", type(e).__name__, e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
