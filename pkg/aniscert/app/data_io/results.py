""" Campaign result persistence

Results CSV columns:
    example_id, true_label, verdict, predicted, p_a_lower, base_radius, radius, alm, n0, n, alpha, seed
Abstained rows leave predicted, base_radius, radius and alm empty. Reals are
written with 12 significant digits.
"""
import csv
import logging
from typing import Callable, Iterable, List, Optional, Sequence, Union

import numpy as np
from pydantic import ValidationError

from ..core.exceptions import ResultsFormatError
from ..enums import Verdict
from ..models.data_models import CurvePoint, DataModel, ExampleResult

logger = logging.getLogger(__name__)

RESULT_COLUMNS = ["example_id", "true_label", "verdict", "predicted", "p_a_lower",
                  "base_radius", "radius", "alm", "n0", "n", "alpha", "seed"]
CURVE_COLUMNS = ["threshold", "acc_radius", "acc_alm"]
PREDICTION_COLUMNS = ["example_id", "true_label", "predicted"]
SIGNIFICANT_DIGITS = 12


def _round(value: Optional[float]) -> Optional[float]:
    return None if value is None else float(f"{value:.{SIGNIFICANT_DIGITS}g}")


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.{SIGNIFICANT_DIGITS}g}"
    return str(value)


class ResultRow(DataModel):
    """ One results CSV row """
    example_id: int
    true_label: int
    verdict: Verdict
    predicted: Optional[int] = None
    p_a_lower: Optional[float] = None
    base_radius: Optional[float] = None
    radius: Optional[float] = None
    alm: Optional[float] = None
    n0: int
    n: int
    alpha: float
    seed: Optional[int] = None

    @classmethod
    def from_example(cls, example: ExampleResult) -> "ResultRow":
        result = example.result
        cert = result.certificate
        return cls(example_id=example.example_id,
                   true_label=example.true_label,
                   verdict=result.verdict,
                   predicted=result.predicted,
                   p_a_lower=_round(result.p_a_lower),
                   base_radius=_round(cert.base_radius) if cert else None,
                   radius=_round(cert.radius) if cert else None,
                   alm=_round(cert.alm) if cert else None,
                   n0=result.n0, n=result.n,
                   alpha=_round(result.alpha),
                   seed=result.seed)


Record = Union[ExampleResult, ResultRow]


def _as_row(record: Record) -> ResultRow:
    return record if isinstance(record, ResultRow) else ResultRow.from_example(record)


def write_results(results: Iterable[Record], path: str) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for record in results:
            row = _as_row(record)
            values = row.dict()
            values["verdict"] = row.verdict.value
            writer.writerow([_format(values[column]) for column in RESULT_COLUMNS])


def _read_rows(path: str, columns: Sequence[str], build: Callable[[dict], DataModel]) -> List:
    try:
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header != list(columns):
                raise ResultsFormatError(f"{path}: expected header {','.join(columns)}, got {header}")
            records = []
            for row in reader:
                if len(row) != len(columns):
                    raise ResultsFormatError(
                        f"{path}: line {reader.line_num}: expected {len(columns)} fields, got {len(row)}")
                values = {column: (value if value != "" else None) for column, value in zip(columns, row)}
                try:
                    records.append(build(values))
                except ValidationError as e:
                    raise ResultsFormatError(f"{path}: line {reader.line_num}: {e}")
            return records
    except OSError as e:
        raise ResultsFormatError(f"cannot read {path}: {e}")


def read_results(path: str) -> List[ResultRow]:
    return _read_rows(path, RESULT_COLUMNS, ResultRow.parse_obj)


def write_curve(points: Iterable[CurvePoint], path: str) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CURVE_COLUMNS)
        for point in points:
            writer.writerow([_format(float(getattr(point, column))) for column in CURVE_COLUMNS])


def read_curve(path: str) -> List[CurvePoint]:
    return _read_rows(path, CURVE_COLUMNS, CurvePoint.parse_obj)


def write_predictions(predictions: Sequence[Optional[int]], labels: Sequence[int], path: str) -> None:
    """ One row per example; abstentions leave predicted empty """
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(PREDICTION_COLUMNS)
        for index, (predicted, label) in enumerate(zip(predictions, labels)):
            writer.writerow([index, int(label), _format(predicted)])


def row_sizes(rows: Sequence[ResultRow], use_alm: bool = False) -> np.ndarray:
    """ Per-row radius (or ALM) when certified and correct, -inf otherwise """
    sizes = np.full(len(rows), -np.inf)
    for index, row in enumerate(rows):
        if row.verdict == Verdict.CERTIFIED and row.predicted == row.true_label:
            sizes[index] = row.alm if use_alm else row.radius
    return sizes
