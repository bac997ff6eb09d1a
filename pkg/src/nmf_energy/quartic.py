"""Quartic energy model for factorization: ||V - WH||_F**2 over the entries of W and H.

Solver variables are the entries of W (row-major), then the entries of H
(row-major), then one trailing slack variable that carries no term.  The
polynomial is built by symbolically squaring each cell residual, so its value
at any point equals the squared Frobenius reconstruction error exactly,
constant included.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .matrices import FactorPair, ProblemInstance, as_matrix
from .polynomial import Poly

__all__ = [
    "VariableLayout",
    "QuarticModel",
    "BudgetCheck",
    "build_quartic_model",
    "default_sum_target",
    "check_variable_budget",
    "MAX_QUARTIC_VARS",
]

MAX_QUARTIC_VARS = 39


@dataclass(frozen=True)
class VariableLayout:
    """Bijection between solver variables and (W|H, row, col) entries.

    Indices 0 .. n*p-1 are W entries, n*p .. n*p+p*m-1 are H entries and the
    last index is the slack variable (absorbs unused sum-constraint mass; it
    never appears in a polynomial term).
    """

    n: int
    m: int
    p: int

    @property
    def num_w(self) -> int:
        return self.n * self.p

    @property
    def num_h(self) -> int:
        return self.p * self.m

    @property
    def num_entries(self) -> int:
        return self.num_w + self.num_h

    @property
    def slack_index(self) -> int:
        return self.num_entries

    @property
    def total_vars(self) -> int:
        return self.num_entries + 1

    def w_index(self, row: int, col: int) -> int:
        if not (0 <= row < self.n and 0 <= col < self.p):
            raise IndexError(f"W index ({row}, {col}) out of range")
        return row * self.p + col

    def h_index(self, row: int, col: int) -> int:
        if not (0 <= row < self.p and 0 <= col < self.m):
            raise IndexError(f"H index ({row}, {col}) out of range")
        return self.num_w + row * self.m + col

    def entry_of(self, index: int) -> tuple[str, int, int]:
        """Inverse map: variable index -> ('W'|'H'|'slack', row, col)."""
        if index < 0 or index >= self.total_vars:
            raise IndexError(f"variable index {index} out of range")
        if index < self.num_w:
            return "W", index // self.p, index % self.p
        if index < self.num_entries:
            rel = index - self.num_w
            return "H", rel // self.m, rel % self.m
        return "slack", -1, -1

    def encode(self, W, H, slack: float = 0.0) -> np.ndarray:
        W = as_matrix(W, "W")
        H = as_matrix(H, "H")
        if W.shape != (self.n, self.p) or H.shape != (self.p, self.m):
            raise ValueError("factor shapes do not match layout")
        x = np.empty(self.total_vars)
        x[: self.num_w] = W.reshape(-1)
        x[self.num_w : self.num_entries] = H.reshape(-1)
        x[self.slack_index] = slack
        return x

    def decode(self, x) -> FactorPair:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.total_vars,):
            raise ValueError(f"expected {self.total_vars} values, got shape {x.shape}")
        W = x[: self.num_w].reshape(self.n, self.p)
        H = x[self.num_w : self.num_entries].reshape(self.p, self.m)
        return FactorPair(W.copy(), H.copy())

    def to_json(self) -> dict:
        return {"n": self.n, "m": self.m, "p": self.p}

    @staticmethod
    def from_json(doc: dict) -> "VariableLayout":
        return VariableLayout(doc["n"], doc["m"], doc["p"])


@dataclass(frozen=True)
class QuarticModel:
    """Energy polynomial plus its layout, sum target and provenance."""

    poly: Poly
    layout: VariableLayout
    sum_target: float
    instance_ref: str

    def energy(self, x) -> float:
        return self.poly.evaluate(x)

    def decode(self, x) -> FactorPair:
        return self.layout.decode(x)

    def to_json(self) -> dict:
        return {
            "poly": self.poly.to_json(),
            "layout": self.layout.to_json(),
            "sum_target": self.sum_target,
            "instance_ref": self.instance_ref,
        }

    @staticmethod
    def from_json(doc: dict) -> "QuarticModel":
        return QuarticModel(
            poly=Poly.from_json(doc["poly"]),
            layout=VariableLayout.from_json(doc["layout"]),
            sum_target=doc["sum_target"],
            instance_ref=doc["instance_ref"],
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @staticmethod
    def load(path) -> "QuarticModel":
        with open(path) as fh:
            return QuarticModel.from_json(json.load(fh))


def default_sum_target(instance: ProblemInstance) -> float:
    """Default sum-constraint value: p*(n+m), the entry count of W and H."""
    return float(instance.p * (instance.n + instance.m))


def build_quartic_model(instance: ProblemInstance,
                        sum_target: Optional[float] = None) -> QuarticModel:
    """Expand sum_ij (V_ij - sum_k W_ik H_kj)**2 into a degree-4 polynomial.

    The expansion works cell by cell from the unexpanded square, so the
    defining identity energy(x) == ||V - WH||_F**2 holds by construction;
    the constant sum_ij V_ij**2 lands in the polynomial offset.
    """
    layout = VariableLayout(instance.n, instance.m, instance.p)
    nv = layout.total_vars
    total = Poly.constant(nv, 0.0)
    for i in range(instance.n):
        for j in range(instance.m):
            cell = Poly.constant(nv, float(instance.V[i, j]))
            for k in range(instance.p):
                cell = cell - Poly.monomial(
                    nv, (layout.w_index(i, k), layout.h_index(k, j)))
            total = total + cell.multiply(cell)
    if sum_target is None:
        sum_target = default_sum_target(instance)
    return QuarticModel(poly=total, layout=layout, sum_target=float(sum_target),
                        instance_ref=instance.case_id)


@dataclass(frozen=True)
class BudgetCheck:
    ok: bool
    detail: str

    def __bool__(self) -> bool:
        return self.ok


def check_variable_budget(model: QuarticModel, max_vars: int = MAX_QUARTIC_VARS) -> BudgetCheck:
    """Variable-count budget including the slack variable."""
    total = model.layout.total_vars
    if total <= max_vars:
        return BudgetCheck(True, f"{total} variables within budget {max_vars}")
    return BudgetCheck(False, f"{total} variables exceed budget {max_vars}")
