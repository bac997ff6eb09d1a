"""Exact and heuristic integer factorization search.

``brute_force_optimum`` enumerates every integer (W, H) within the level
bounds and is the ground-truth oracle for small cases.  ``heuristic_search``
is a seeded multi-restart local search that stands in for a serial
constraint-programming baseline: it gets a matched evaluation budget rather
than unlimited time, and halts immediately on a perfect factorization.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .matrices import FactorPair, IntegerDomain, ProblemInstance, stream_rng

__all__ = [
    "IntObjective",
    "SearchBudget",
    "SearchSpaceTooLarge",
    "brute_force_optimum",
    "heuristic_search",
    "EVALS_PER_SECOND",
]

BRUTE_FORCE_CAP = 10_000_000
# Logical-budget calibration: one objective evaluation per tick, so a budget
# of T seconds maps to T * EVALS_PER_SECOND evaluations in logical mode.
EVALS_PER_SECOND = 200_000


class SearchSpaceTooLarge(ValueError):
    """Enumeration would exceed the brute-force guard."""


@dataclass(frozen=True)
class IntObjective:
    """Reconstruction error for integer factors: abs or squared differences."""

    variant: str

    def __post_init__(self):
        if self.variant not in ("abs", "sq"):
            raise ValueError(f"unknown objective {self.variant!r}")

    def value(self, V: np.ndarray, W: np.ndarray, H: np.ndarray) -> float:
        diff = V - W @ H
        if self.variant == "abs":
            return float(np.abs(diff).sum())
        return float((diff * diff).sum())

    def batch_value(self, V: np.ndarray, WH: np.ndarray) -> np.ndarray:
        diff = V[None, :, :] - WH
        if self.variant == "abs":
            return np.abs(diff).sum(axis=(1, 2))
        return (diff * diff).sum(axis=(1, 2))


ABS_DIFF = IntObjective("abs")
SQ_DIFF = IntObjective("sq")


@dataclass(frozen=True)
class SearchBudget:
    """Evaluation budget for the heuristic.

    ``logical`` mode converts ``time_limit`` seconds into a fixed number of
    objective evaluations (time-independent, reproducible); ``wallclock``
    mode checks the real clock.  ``evals`` overrides the conversion directly.
    """

    time_limit: float = 1.0
    seed: int = 0
    restarts: int = 8
    mode: str = "logical"
    evals: Optional[int] = None

    def __post_init__(self):
        if self.time_limit <= 0:
            raise ValueError("time_limit must be > 0")
        if self.mode not in ("logical", "wallclock"):
            raise ValueError(f"unknown budget mode {self.mode!r}")
        if self.restarts < 1:
            raise ValueError("restarts must be positive")

    def eval_budget(self) -> Optional[int]:
        if self.mode != "logical":
            return None
        if self.evals is not None:
            return int(self.evals)
        return int(self.time_limit * EVALS_PER_SECOND)


def _require_integer_instance(instance: ProblemInstance) -> int:
    if not isinstance(instance.domain, IntegerDomain):
        raise TypeError("integer search requires an IntegerDomain instance")
    return instance.domain.levels


def brute_force_optimum(instance: ProblemInstance,
                        objective: IntObjective) -> tuple[FactorPair, float]:
    """Exhaustive global optimum; ties break to the lexicographically first
    (W, H) flattened encoding (W row-major, then H row-major)."""
    levels = _require_integer_instance(instance)
    n, m, p = instance.n, instance.m, instance.p
    nvars = n * p + p * m
    size = levels ** nvars
    if size > BRUTE_FORCE_CAP:
        raise SearchSpaceTooLarge(
            f"{levels}**{nvars} = {size} exceeds cap {BRUTE_FORCE_CAP}")

    V = instance.V
    best_val = np.inf
    best_digits = None
    chunk = 1 << 14
    # Mixed-radix decode of the enumeration index, first digit most
    # significant, gives lexicographic order over (W, H).
    weights = levels ** np.arange(nvars - 1, -1, -1, dtype=np.int64)
    for start in range(0, size, chunk):
        idx = np.arange(start, min(start + chunk, size), dtype=np.int64)
        digits = (idx[:, None] // weights[None, :]) % levels
        Wb = digits[:, : n * p].reshape(-1, n, p).astype(float)
        Hb = digits[:, n * p :].reshape(-1, p, m).astype(float)
        vals = objective.batch_value(V, np.einsum("bnp,bpm->bnm", Wb, Hb))
        local = int(np.argmin(vals))
        if vals[local] < best_val:
            best_val = float(vals[local])
            best_digits = digits[local].copy()
            if best_val == 0.0:
                break

    W = best_digits[: n * p].reshape(n, p).astype(float)
    H = best_digits[n * p :].reshape(p, m).astype(float)
    return FactorPair(W, H), best_val


def heuristic_search(instance: ProblemInstance, objective: IntObjective,
                     budget: SearchBudget) -> tuple[FactorPair, float]:
    """Restarted local search: single-entry +/-1 moves with occasional random
    level jumps; a stalled descent triggers a fresh restart.  Deterministic
    under a logical budget, early exit on a perfect factorization."""
    levels = _require_integer_instance(instance)
    n, m, p = instance.n, instance.m, instance.p
    V = instance.V
    num_entries = n * p + p * m
    stall_limit = 60 * num_entries
    eval_cap = budget.eval_budget()
    deadline = None if eval_cap is not None else time.perf_counter() + budget.time_limit

    best_W = None
    best_H = None
    best_val = np.inf
    evals = 0
    restart = 0

    def out_of_budget() -> bool:
        if eval_cap is not None:
            return evals >= eval_cap
        return time.perf_counter() >= deadline

    # budget.restarts is the minimum number of descents; cycling continues
    # while budget remains so long runs keep exploring.
    while best_val > 0.0 and (restart < budget.restarts or not out_of_budget()):
        if restart > 0 and out_of_budget():
            break
        rng = stream_rng(budget.seed, "intsearch", restart)
        restart += 1
        W = rng.integers(0, levels, size=(n, p)).astype(float)
        H = rng.integers(0, levels, size=(p, m)).astype(float)
        cur = objective.value(V, W, H)
        evals += 1
        if cur < best_val:
            best_W, best_H, best_val = W.copy(), H.copy(), cur
        stall = 0
        while not out_of_budget() and best_val > 0.0 and stall < stall_limit:
            target = int(rng.integers(num_entries))
            mat, r, c = (W, target // p, target % p) if target < n * p else \
                (H, (target - n * p) // m, (target - n * p) % m)
            old = mat[r, c]
            if rng.random() < 0.15:
                mat[r, c] = float(rng.integers(0, levels))
            else:
                step = -1.0 if rng.random() < 0.5 else 1.0
                mat[r, c] = min(max(old + step, 0.0), levels - 1.0)
            if mat[r, c] == old:
                stall += 1
                continue
            val = objective.value(V, W, H)
            evals += 1
            if val <= cur:
                stall = stall + 1 if val == cur else 0
                cur = val
                if val < best_val:
                    best_W, best_H, best_val = W.copy(), H.copy(), val
            else:
                mat[r, c] = old
                stall += 1

    return FactorPair(best_W, best_H), float(best_val)
