"""Sparse polynomials over indexed variables, degree capped at 5.

A term is a sorted tuple of variable indices with repetition (so genuine
powers like w**2 * h**2 are representable before any binarization), mapped
to a float coefficient.  The constant part lives in ``offset``.  Instances
are value-like: every operation returns a new polynomial and exact-zero
coefficients are never stored.
"""

from __future__ import annotations

import json
from typing import Iterable, Mapping

import numpy as np

__all__ = ["DegreeError", "Poly", "MAX_DEGREE"]

MAX_DEGREE = 5


class DegreeError(ValueError):
    """A product would exceed the supported degree."""


def _normalize_terms(num_vars: int, terms: Mapping[tuple, float]) -> dict:
    out = {}
    for key, coeff in terms.items():
        key = tuple(sorted(int(i) for i in key))
        if not key:
            raise ValueError("empty term key; constants belong in offset")
        if len(key) > MAX_DEGREE:
            raise DegreeError(f"term {key} exceeds degree {MAX_DEGREE}")
        if key[0] < 0 or key[-1] >= num_vars:
            raise ValueError(f"term {key} out of range for {num_vars} variables")
        coeff = float(coeff)
        if coeff != 0.0:
            out[key] = out.get(key, 0.0) + coeff
            if out[key] == 0.0:
                del out[key]
    return out


class Poly:
    """Polynomial with indexed variables, sparse terms and a constant offset."""

    __slots__ = ("num_vars", "terms", "offset")

    def __init__(self, num_vars: int, terms: Mapping[tuple, float] | None = None,
                 offset: float = 0.0):
        if num_vars < 0:
            raise ValueError("num_vars must be >= 0")
        self.num_vars = int(num_vars)
        self.terms = _normalize_terms(self.num_vars, terms or {})
        self.offset = float(offset)

    # -- constructors ------------------------------------------------------

    @classmethod
    def constant(cls, num_vars: int, value: float) -> "Poly":
        return cls(num_vars, {}, value)

    @classmethod
    def variable(cls, num_vars: int, index: int) -> "Poly":
        return cls(num_vars, {(index,): 1.0})

    @classmethod
    def monomial(cls, num_vars: int, key: Iterable[int], coeff: float = 1.0) -> "Poly":
        return cls(num_vars, {tuple(key): coeff})

    # -- inspection --------------------------------------------------------

    def degree(self) -> int:
        return max((len(k) for k in self.terms), default=0)

    def variables(self) -> set:
        seen = set()
        for key in self.terms:
            seen.update(key)
        return seen

    def __eq__(self, other) -> bool:
        return (isinstance(other, Poly) and self.num_vars == other.num_vars
                and self.offset == other.offset and self.terms == other.terms)

    def __repr__(self) -> str:
        return f"Poly(num_vars={self.num_vars}, terms={len(self.terms)}, offset={self.offset})"

    # -- evaluation --------------------------------------------------------

    def evaluate(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.num_vars,):
            raise ValueError(f"expected {self.num_vars} values, got shape {x.shape}")
        total = self.offset
        for key, coeff in self.terms.items():
            prod = coeff
            for i in key:
                prod *= x[i]
            total += prod
        return float(total)

    # -- algebra -----------------------------------------------------------

    def __add__(self, other) -> "Poly":
        if isinstance(other, (int, float)):
            return Poly(self.num_vars, self.terms, self.offset + other)
        if not isinstance(other, Poly):
            return NotImplemented
        if self.num_vars != other.num_vars:
            raise ValueError("operands have different variable counts")
        merged = dict(self.terms)
        for key, coeff in other.terms.items():
            merged[key] = merged.get(key, 0.0) + coeff
        return Poly(self.num_vars, merged, self.offset + other.offset)

    __radd__ = __add__

    def __neg__(self) -> "Poly":
        return self.scale(-1.0)

    def __sub__(self, other) -> "Poly":
        if isinstance(other, (int, float)):
            return self + (-other)
        if not isinstance(other, Poly):
            return NotImplemented
        return self + other.scale(-1.0)

    def __rsub__(self, other) -> "Poly":
        return (-self) + other

    def scale(self, factor: float) -> "Poly":
        factor = float(factor)
        return Poly(self.num_vars, {k: c * factor for k, c in self.terms.items()},
                    self.offset * factor)

    def multiply(self, other: "Poly", *, truncate: bool = False) -> "Poly":
        """Exact product; raises DegreeError above degree 5 unless truncating.

        With ``truncate=True`` terms above the cap are dropped (accepting the
        truncation error); nothing in this package ever needs that path.
        """
        if self.num_vars != other.num_vars:
            raise ValueError("operands have different variable counts")
        out: dict = {}
        offset = self.offset * other.offset
        for key, coeff in self.terms.items():
            if other.offset != 0.0:
                out[key] = out.get(key, 0.0) + coeff * other.offset
        for key, coeff in other.terms.items():
            if self.offset != 0.0:
                out[key] = out.get(key, 0.0) + coeff * self.offset
        for ka, ca in self.terms.items():
            for kb, cb in other.terms.items():
                if len(ka) + len(kb) > MAX_DEGREE:
                    if truncate:
                        continue
                    raise DegreeError(
                        f"product term of degree {len(ka) + len(kb)} exceeds {MAX_DEGREE}")
                key = tuple(sorted(ka + kb))
                out[key] = out.get(key, 0.0) + ca * cb
        return Poly(self.num_vars, out, offset)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return self.scale(other)
        if isinstance(other, Poly):
            return self.multiply(other)
        return NotImplemented

    __rmul__ = __mul__

    # -- binary-variable helpers --------------------------------------------

    def idempotent_reduce(self) -> "Poly":
        """Collapse repeated indices (q**n -> q) for binary interpretation."""
        out: dict = {}
        for key, coeff in self.terms.items():
            reduced = tuple(sorted(set(key)))
            out[reduced] = out.get(reduced, 0.0) + coeff
        return Poly(self.num_vars, out, self.offset)

    # -- persistence ---------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "num_vars": self.num_vars,
            "offset": self.offset,
            "terms": [{"vars": list(k), "coeff": c} for k, c in sorted(self.terms.items())],
        }

    @staticmethod
    def from_json(doc: dict) -> "Poly":
        terms = {tuple(t["vars"]): t["coeff"] for t in doc["terms"]}
        return Poly(doc["num_vars"], terms, doc["offset"])

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @staticmethod
    def load(path) -> "Poly":
        with open(path) as fh:
            return Poly.from_json(json.load(fh))


def compiled_evaluator(poly: Poly):
    """Vectorized evaluator: returns f(X) for X of shape (batch, num_vars).

    Terms are packed into a padded index matrix pointing into an augmented
    vector with a trailing 1.0, so products of unequal degree vectorize.
    """
    n = poly.num_vars
    keys = list(poly.terms.keys())
    if not keys:
        offset = poly.offset

        def eval_const(X: np.ndarray) -> np.ndarray:
            X = np.atleast_2d(X)
            return np.full(X.shape[0], offset)

        return eval_const

    width = max(len(k) for k in keys)
    idx = np.full((len(keys), width), n, dtype=np.intp)
    for row, key in enumerate(keys):
        idx[row, : len(key)] = key
    coeffs = np.array([poly.terms[k] for k in keys])
    offset = poly.offset

    def eval_batch(X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        aug = np.concatenate([X, np.ones((X.shape[0], 1))], axis=1)
        prods = aug[:, idx].prod(axis=2)
        return prods @ coeffs + offset

    return eval_batch
