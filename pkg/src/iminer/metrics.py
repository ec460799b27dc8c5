"""Error metrics, trend fitting and comparison reports."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

REPORT_COLUMNS = ("method", "horizon", "rmse_train", "rmse_test", "cc_test", "rules", "clusters")
PREDICTION_COLUMNS = ("t", "actual", "predicted", "trend")

# Reference results on a proprietary access-log corpus (normalized RMSE, test CC),
# kept for side-by-side reports; they are not reproducible on synthetic data.
REFERENCE_RESULTS = {
    ("i-Miner", "daily"): (0.0044, 0.0053, 0.9967),
    ("i-Miner", "hourly"): (0.0012, 0.0041, 0.9981),
    ("TKFIS", "daily"): (0.0176, 0.0402, 0.9953),
    ("TKFIS", "hourly"): (0.0433, 0.0433, 0.9841),
    ("ANN", "daily"): (0.0345, 0.0481, 0.9292),
    ("ANN", "hourly"): (0.0546, 0.0639, 0.9493),
    ("LGP", "daily"): (0.0543, 0.0749, 0.9315),
    ("LGP", "hourly"): (0.0654, 0.0516, 0.9446),
}
REFERENCE_RULES = {"daily": 62, "hourly": 64, "grid": 81}


def _pair(pred, actual):
    pred = np.asarray(pred, dtype=np.float64).ravel()
    actual = np.asarray(actual, dtype=np.float64).ravel()
    if pred.shape != actual.shape:
        raise ValueError(f"length mismatch: {pred.size} predictions vs {actual.size} actuals")
    if pred.size == 0:
        raise ValueError("empty series")
    return pred, actual


def rmse(pred, actual) -> float:
    pred, actual = _pair(pred, actual)
    r = pred - actual
    return math.sqrt(float(r @ r) / r.size)


def corr_coef(pred, actual) -> float:
    """Pearson correlation; undefined (raises) when either series is constant."""
    pred, actual = _pair(pred, actual)
    if pred.size < 2:
        raise ValueError("correlation needs at least 2 points")
    a = pred - pred.mean()
    b = actual - actual.mean()
    sa, sb = math.sqrt(float(a @ a)), math.sqrt(float(b @ b))
    if sa == 0.0 or sb == 0.0:
        raise ValueError("correlation is undefined for a constant series")
    return max(-1.0, min(1.0, float(a @ b) / (sa * sb)))


@dataclass(frozen=True)
class TrendFit:
    coefficients: np.ndarray  # power basis in x rescaled to [-1, 1], lowest order first
    fitted: np.ndarray
    degree: int


def polyfit_trend(series, degree: int = 6) -> TrendFit:
    """Least-squares polynomial trend over x = 1..n.

    x is mapped onto [-1, 1] before fitting; the coefficients refer to that
    rescaled variable.
    """
    y = np.asarray(series, dtype=np.float64).ravel()
    if y.size < degree + 1:
        raise ValueError(f"need at least {degree + 1} points for a degree-{degree} fit, got {y.size}")
    x = np.arange(1, y.size + 1, dtype=np.float64)
    poly = np.polynomial.Polynomial.fit(x, y, degree)
    return TrendFit(poly.coef.copy(), poly(x), degree)


def scaled_abscissa(n: int) -> np.ndarray:
    x = np.arange(1, n + 1, dtype=np.float64)
    if n == 1:
        return np.zeros(1)
    return 2.0 * (x - 1.0) / (n - 1.0) - 1.0


@dataclass(frozen=True)
class EvalReport:
    method: str
    horizon: str
    train_rmse: float
    test_rmse: float
    test_cc: float
    rule_count: Optional[int] = None
    cluster_count: Optional[int] = None

    def __post_init__(self):
        if self.train_rmse < 0 or self.test_rmse < 0:
            raise ValueError("RMSE cannot be negative")
        if not math.isnan(self.test_cc) and not -1.0 <= self.test_cc <= 1.0:
            raise ValueError("correlation must lie in [-1, 1]")

    def row(self) -> list[str]:
        opt = lambda v: "" if v is None else str(int(v))  # noqa: E731
        return [self.method, self.horizon, repr(self.train_rmse), repr(self.test_rmse), repr(self.test_cc),
                opt(self.rule_count), opt(self.cluster_count)]


def compare(reports: Sequence[EvalReport]) -> str:
    """CSV comparison table, one row per report, best test RMSE first."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for rep in sorted(reports, key=lambda r: (r.test_rmse, r.method)):
        w.writerow(rep.row())
    return buf.getvalue()


def read_reports(text: str) -> list[EvalReport]:
    out = []
    for r in csv.DictReader(io.StringIO(text)):
        opt = lambda v: None if v in ("", None) else int(v)  # noqa: E731
        out.append(EvalReport(r["method"], r["horizon"], float(r["rmse_train"]), float(r["rmse_test"]),
                              float(r["cc_test"]), opt(r["rules"]), opt(r["clusters"])))
    return out


def prediction_csv(actual, predicted, trend=None) -> str:
    actual, predicted = _pair(actual, predicted)
    if trend is None:
        trend = polyfit_trend(predicted).fitted if predicted.size >= 7 else np.full_like(predicted, np.nan)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PREDICTION_COLUMNS)
    for t, (a, p, tr) in enumerate(zip(actual, predicted, trend), start=1):
        w.writerow([t, repr(float(a)), repr(float(p)), repr(float(tr))])
    return buf.getvalue()


def read_predictions(text: str) -> tuple[np.ndarray, np.ndarray]:
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise ValueError("prediction CSV has no rows")
    return (np.array([float(r["actual"]) for r in rows]), np.array([float(r["predicted"]) for r in rows]))
