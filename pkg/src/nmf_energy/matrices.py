"""Dense non-negative matrices, test-case generation and Frobenius error metrics.

Matrices are plain ``numpy.ndarray`` objects (2-D, float64, row-major).
This module adds the validation helpers, the seeded problem-instance
generator used by every experiment driver, and the absolute/relative
reconstruction error metrics.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

__all__ = [
    "ContinuousDomain",
    "IntegerDomain",
    "FactorPair",
    "ProblemInstance",
    "as_matrix",
    "check_non_negative",
    "matmul",
    "error_metrics",
    "stream_rng",
    "generate_case",
    "write_matrix_csv",
    "read_matrix_csv",
]

CASE_KINDS = ("continuous_planted", "continuous_raw", "integer_planted", "integer_raw")


@dataclass(frozen=True)
class ContinuousDomain:
    """Entries drawn uniformly from [low, high) and rounded to two decimals."""

    low: float = 0.0
    high: float = 1.0


@dataclass(frozen=True)
class IntegerDomain:
    """Entries are integers in {0, ..., levels - 1}."""

    levels: int

    def __post_init__(self):
        if self.levels < 2:
            raise ValueError(f"integer domain needs at least 2 levels, got {self.levels}")


Domain = Union[ContinuousDomain, IntegerDomain]


def as_matrix(values, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D float64 array, rejecting anything else."""
    a = np.asarray(values, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def check_non_negative(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    if a.min(initial=0.0) < 0:
        raise ValueError(f"{name} has negative entries (min {a.min()})")
    return a


@dataclass(frozen=True)
class FactorPair:
    """A conformant pair of non-negative factors (W, H)."""

    W: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        W = check_non_negative(as_matrix(self.W, "W"), "W")
        H = check_non_negative(as_matrix(self.H, "H"), "H")
        if W.shape[1] != H.shape[0]:
            raise ValueError(f"factor shapes do not conform: {W.shape} x {H.shape}")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "H", H)

    def product(self) -> np.ndarray:
        return matmul(self.W, self.H)


@dataclass(frozen=True)
class ProblemInstance:
    """A single factorization test case.

    ``planted`` is present for constructed cases (V = W @ H exactly), absent
    for raw cases where no exact factorization is guaranteed.
    """

    V: np.ndarray
    n: int
    m: int
    p: int
    domain: Domain
    case_id: str
    seed: int
    planted: Optional[FactorPair] = None

    def __post_init__(self):
        V = check_non_negative(as_matrix(self.V, "V"), "V")
        if V.shape != (self.n, self.m):
            raise ValueError(f"V has shape {V.shape}, expected ({self.n}, {self.m})")
        if min(self.n, self.m, self.p) < 1:
            raise ValueError("dimensions must be positive")
        object.__setattr__(self, "V", V)
        if self.planted is not None:
            if self.planted.W.shape != (self.n, self.p) or self.planted.H.shape != (self.p, self.m):
                raise ValueError("planted factor shapes do not match (n, p, m)")

    def to_json(self) -> dict:
        doc = {
            "n": self.n,
            "m": self.m,
            "p": self.p,
            "domain": _domain_to_json(self.domain),
            "seed": self.seed,
            "case_id": self.case_id,
            "V": self.V.tolist(),
        }
        if self.planted is not None:
            doc["planted"] = {"W": self.planted.W.tolist(), "H": self.planted.H.tolist()}
        return doc

    @staticmethod
    def from_json(doc: dict) -> "ProblemInstance":
        planted = None
        if doc.get("planted") is not None:
            planted = FactorPair(np.array(doc["planted"]["W"]), np.array(doc["planted"]["H"]))
        return ProblemInstance(
            V=np.array(doc["V"], dtype=float),
            n=doc["n"],
            m=doc["m"],
            p=doc["p"],
            domain=_domain_from_json(doc["domain"]),
            case_id=doc["case_id"],
            seed=doc["seed"],
            planted=planted,
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)

    @staticmethod
    def load(path) -> "ProblemInstance":
        with open(path) as fh:
            return ProblemInstance.from_json(json.load(fh))


def _domain_to_json(domain: Domain) -> dict:
    if isinstance(domain, ContinuousDomain):
        return {"kind": "continuous", "low": domain.low, "high": domain.high}
    return {"kind": "integer", "levels": domain.levels}


def _domain_from_json(doc: dict) -> Domain:
    if doc["kind"] == "continuous":
        return ContinuousDomain(doc["low"], doc["high"])
    if doc["kind"] == "integer":
        return IntegerDomain(doc["levels"])
    raise ValueError(f"unknown domain kind {doc['kind']!r}")


def matmul(W, H) -> np.ndarray:
    """Matrix product W @ H with an explicit conformance check."""
    W = as_matrix(W, "W")
    H = as_matrix(H, "H")
    if W.shape[1] != H.shape[0]:
        raise ValueError(f"cannot multiply {W.shape} by {H.shape}")
    return W @ H


def error_metrics(V, V_hat) -> tuple[float, float]:
    """Absolute and relative Frobenius reconstruction errors.

    Returns (epsilon, delta) where epsilon = ||V - V_hat||_F and
    delta = epsilon / ||V||_F.  When ||V||_F == 0 the relative error is
    defined as 0 for an exact reconstruction and +inf otherwise.
    """
    V = as_matrix(V, "V")
    V_hat = as_matrix(V_hat, "V_hat")
    if V.shape != V_hat.shape:
        raise ValueError(f"shape mismatch: {V.shape} vs {V_hat.shape}")
    eps = float(np.linalg.norm(V - V_hat, "fro"))
    norm_v = float(np.linalg.norm(V, "fro"))
    if norm_v == 0.0:
        return eps, (0.0 if eps == 0.0 else float("inf"))
    return eps, eps / norm_v


def stream_rng(seed: int, *names) -> np.random.Generator:
    """Independent PCG64 stream keyed by (seed, names...).

    The extra names (typically a case id and a role string) are hashed with
    BLAKE2b into the seed material, so streams for different cases are
    independent of the order in which they are drawn.
    """
    material = ":".join(str(n) for n in names).encode()
    digest = hashlib.blake2b(material, digest_size=16).digest()
    words = [int.from_bytes(digest[i : i + 8], "little") for i in (0, 8)]
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), *words]))


def _round_hundredth(a: np.ndarray) -> np.ndarray:
    # np.round is round-half-to-even, matching decimal "round to hundredth".
    return np.round(a, 2)


def generate_case(kind: str, n: int, m: int, p: int, domain: Domain, seed: int,
                  case_id: Optional[str] = None) -> ProblemInstance:
    """Generate one seeded test case.

    Kinds:

    * ``continuous_planted`` -- W, H uniform in [low, high) rounded to the
      hundredth place, V = W @ H exactly (V itself not re-rounded).
    * ``continuous_raw`` -- V uniform in [low, high), rounded to the hundredth.
    * ``integer_planted`` -- W, H uniform integers in {0..levels-1}, V = W @ H.
    * ``integer_raw`` -- V uniform integers in {0..levels-1}.

    Deterministic given (seed, case_id, kind, dims): the RNG stream is derived
    from those values only, so cases can be generated in any order.
    """
    if kind not in CASE_KINDS:
        raise ValueError(f"unknown case kind {kind!r}")
    if min(n, m, p) < 1:
        raise ValueError("dimensions must be positive")
    if kind.startswith("integer") and not isinstance(domain, IntegerDomain):
        raise TypeError(f"{kind} requires an IntegerDomain")
    if kind.startswith("continuous") and not isinstance(domain, ContinuousDomain):
        raise TypeError(f"{kind} requires a ContinuousDomain")
    if case_id is None:
        case_id = f"{kind}-{n}x{m}-p{p}-s{seed}"

    rng = stream_rng(seed, case_id, kind, n, m, p)
    planted = None
    if kind == "continuous_planted":
        lo, hi = domain.low, domain.high
        W = _round_hundredth(rng.uniform(lo, hi, size=(n, p)))
        H = _round_hundredth(rng.uniform(lo, hi, size=(p, m)))
        planted = FactorPair(W, H)
        V = planted.product()
    elif kind == "continuous_raw":
        V = _round_hundredth(rng.uniform(domain.low, domain.high, size=(n, m)))
    elif kind == "integer_planted":
        W = rng.integers(0, domain.levels, size=(n, p)).astype(float)
        H = rng.integers(0, domain.levels, size=(p, m)).astype(float)
        planted = FactorPair(W, H)
        V = planted.product()
    else:  # integer_raw
        V = rng.integers(0, domain.levels, size=(n, m)).astype(float)

    return ProblemInstance(V=V, n=n, m=m, p=p, domain=domain, case_id=case_id,
                           seed=seed, planted=planted)


def write_matrix_csv(path, a: np.ndarray) -> None:
    """One row per line, decimal floats, no header."""
    a = as_matrix(a)
    with open(path, "w") as fh:
        for row in a:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(tok) for tok in line.split(",")])
    return as_matrix(rows)
