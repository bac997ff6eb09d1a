"""Analysis toolkit: median/MAD, the one-sided binomial test, percentage
decrease, run selection and simple linearized curve fits.

One median convention is used package-wide: the lower-middle element for
even-length lists, matching the deterministic run-selection rule.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

__all__ = [
    "median_lower",
    "median_mad",
    "median_select_index",
    "binomial_p",
    "pct_decrease",
    "fit_curve",
    "ComparisonRecord",
    "compare_deltas",
    "win_counts",
    "comparison_summary",
    "write_comparison_csv",
    "histogram_bins",
]

_EXACT_LIMIT = 1000


def median_lower(values: Sequence[float]) -> float:
    """Median with the lower-middle element for even counts."""
    if len(values) == 0:
        raise ValueError("median of empty list")
    ordered = sorted(float(v) for v in values)
    return ordered[(len(ordered) - 1) // 2]


def median_mad(values: Sequence[float]) -> tuple[float, float]:
    """(median, median absolute deviation), both under the lower-middle rule."""
    med = median_lower(values)
    mad = median_lower([abs(float(v) - med) for v in values])
    return med, mad


def median_select_index(values: Sequence[float]) -> int:
    """Index of the value closest to the median.

    Ties break to the lower value, then to the lower index; used to pick the
    representative solver run.
    """
    if len(values) == 0:
        raise ValueError("cannot select from an empty list")
    med = median_lower(values)
    return min(range(len(values)),
               key=lambda i: (abs(float(values[i]) - med), float(values[i]), i))


def binomial_p(n_b: int, n_w: int) -> float:
    """One-sided sign-test p-value for n_b wins out of n_b + n_w decisive trials.

    p = 2**-(n_b+n_w) * sum_{k=n_b}^{n_b+n_w} C(n_b+n_w, k).  Exact big-integer
    arithmetic up to 1000 trials (so values down to ~1e-31 are exact), log-space
    summation beyond.  Defined as 1 when there are no decisive trials.
    """
    if n_b < 0 or n_w < 0:
        raise ValueError("counts must be non-negative")
    n = n_b + n_w
    if n == 0:
        return 1.0
    if n <= _EXACT_LIMIT:
        total = sum(math.comb(n, k) for k in range(n_b, n + 1))
        return float(Fraction(total, 1 << n))
    # Log-space tail sum, shifted by the largest term to avoid underflow.
    log2 = n * math.log(2.0)
    logs = [math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1) - log2
            for k in range(n_b, n + 1)]
    peak = max(logs)
    return float(math.exp(peak) * math.fsum(math.exp(v - peak) for v in logs))


def pct_decrease(delta_base: float, delta_new: float) -> float:
    """100 * (base - new) / base; negative values mean a percentage increase."""
    if delta_base <= 0:
        raise ValueError(f"baseline relative error must be > 0, got {delta_base}")
    return 100.0 * (delta_base - delta_new) / delta_base


def fit_curve(kind: str, points: Sequence[tuple]) -> tuple[float, float, float]:
    """Least squares on the linearized model.

    ``log``: y = a + b*ln(x) (requires x > 0); ``exp``: y = a*e**(b*x)
    (requires y > 0, fitted as ln y = ln a + b*x).  Returns (a, b, residual)
    with the residual summed in the fitted (linearized) space.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise ValueError("need at least two (x, y) points")
    x, y = pts[:, 0], pts[:, 1]
    if kind == "log":
        if (x <= 0).any():
            raise ValueError("log fit requires x > 0")
        design = np.column_stack([np.ones_like(x), np.log(x)])
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        resid = float(((y - design @ coef) ** 2).sum())
        return float(coef[0]), float(coef[1]), resid
    if kind == "exp":
        if (y <= 0).any():
            raise ValueError("exp fit requires y > 0")
        design = np.column_stack([np.ones_like(x), x])
        target = np.log(y)
        coef, *_ = np.linalg.lstsq(design, target, rcond=None)
        resid = float(((target - design @ coef) ** 2).sum())
        return float(np.exp(coef[0])), float(coef[1]), resid
    raise ValueError(f"unknown fit kind {kind!r}")


@dataclass(frozen=True)
class ComparisonRecord:
    """Per-case relative errors of a baseline and a challenger."""

    case_id: str
    delta_base: float
    delta_new: float
    winner: str

    def __post_init__(self):
        expected = compare_winner(self.delta_base, self.delta_new)
        if self.winner != expected:
            raise ValueError(f"winner {self.winner!r} inconsistent with deltas "
                             f"({self.delta_base}, {self.delta_new})")


def compare_winner(delta_base: float, delta_new: float) -> str:
    if delta_new < delta_base:
        return "new"
    if delta_base < delta_new:
        return "base"
    return "tie"


def compare_deltas(case_id: str, delta_base: float, delta_new: float) -> ComparisonRecord:
    return ComparisonRecord(case_id, delta_base, delta_new,
                            compare_winner(delta_base, delta_new))


def win_counts(records: Sequence[ComparisonRecord]) -> tuple[int, int]:
    """(challenger wins, baseline wins); ties are excluded from both counts."""
    n_new = sum(1 for r in records if r.winner == "new")
    n_base = sum(1 for r in records if r.winner == "base")
    return n_new, n_base


def comparison_summary(records: Sequence[ComparisonRecord]) -> dict:
    """Table row: win counts, p-value and percentage-decrease aggregates."""
    n_b, n_w = win_counts(records)
    improvements = [pct_decrease(r.delta_base, r.delta_new)
                    for r in records if r.delta_base > 0]
    if improvements:
        med, mad = median_mad(improvements)
        best, worst = max(improvements), min(improvements)
    else:
        med = mad = best = worst = None  # undefined without a positive baseline
    return {
        "n_b": n_b,
        "n_w": n_w,
        "ties": len(records) - n_b - n_w,
        "p_value": binomial_p(n_b, n_w),
        "median_improvement": med,
        "mad_improvement": mad,
        "best_improvement": best,
        "worst_change": worst,
        "skipped_zero_base": sum(1 for r in records if r.delta_base <= 0),
    }


def write_comparison_csv(path, records: Sequence[ComparisonRecord]) -> None:
    """Per-case comparison table: case_id, delta_base, delta_new, winner,
    pct_decrease (blank when the baseline error is not positive)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["case_id", "delta_base", "delta_new", "winner",
                         "pct_decrease"])
        for r in records:
            pct = (repr(pct_decrease(r.delta_base, r.delta_new))
                   if r.delta_base > 0 else "")
            writer.writerow([r.case_id, repr(r.delta_base), repr(r.delta_new),
                             r.winner, pct])


def histogram_bins(values: Sequence[float], width: float) -> list[tuple[float, float, int]]:
    """Non-empty half-open bins [lo, lo+width) aligned to multiples of width."""
    if width <= 0:
        raise ValueError("bin width must be > 0")
    counts: dict = {}
    for v in values:
        lo = math.floor(float(v) / width) * width
        counts[lo] = counts.get(lo, 0) + 1
    return [(lo, lo + width, counts[lo]) for lo in sorted(counts)]
