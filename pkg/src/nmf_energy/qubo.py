"""Binary formulation: bit-encode factor entries, reduce quartic to quadratic.

The pipeline is ``build_binary_quartic`` (bit expansion of every W/H entry,
symbolic squaring, idempotence reduction) followed by ``quadratize`` (repeated
substitution of the most frequent variable pair by a fresh auxiliary, guarded
by a Rosenberg penalty), producing a QUBO.  QUBO and Ising forms convert into
each other exactly via sigma = 2q - 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .matrices import ContinuousDomain, FactorPair, IntegerDomain, ProblemInstance
from .polynomial import Poly
from .quartic import VariableLayout

__all__ = [
    "BitEncoding",
    "DomainNotCoveredError",
    "SourceBit",
    "Auxiliary",
    "PenaltyPolicy",
    "QuboModel",
    "IsingModel",
    "build_binary_quartic",
    "quadratize",
    "decode_bits",
    "qubo_to_ising",
    "ising_to_qubo",
]


class DomainNotCoveredError(ValueError):
    """The bit encoding cannot represent the instance's value domain."""


@dataclass(frozen=True)
class BitEncoding:
    """Value = scale * sum_{j=0..highest_bit} 2**j q_j + offset.

    Representable set: {offset + scale * t : t integer, 0 <= t < 2**(highest_bit+1)},
    i.e. the range [offset, offset + scale * (2**(highest_bit+1) - 1)].
    """

    highest_bit: int
    scale: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        if self.highest_bit < 0:
            raise ValueError("highest_bit must be >= 0")
        if self.scale <= 0:
            raise ValueError("scale must be > 0")

    @property
    def bits_per_entry(self) -> int:
        return self.highest_bit + 1

    @property
    def max_code(self) -> int:
        return 2 ** self.bits_per_entry - 1

    @property
    def top(self) -> float:
        return self.offset + self.scale * self.max_code

    @classmethod
    def for_levels(cls, levels: int) -> "BitEncoding":
        """Smallest unit-scale encoding covering integers 0..levels-1."""
        if levels < 2:
            raise ValueError("need at least 2 levels")
        return cls(highest_bit=int(levels - 1).bit_length() - 1, scale=1.0, offset=0.0)

    def covers(self, domain: Union[ContinuousDomain, IntegerDomain]) -> bool:
        if isinstance(domain, IntegerDomain):
            for v in range(domain.levels):
                t = (v - self.offset) / self.scale
                if abs(t - round(t)) > 1e-12 or not (0 <= round(t) <= self.max_code):
                    return False
            return True
        return self.offset <= domain.low and self.top >= domain.high

    def value_of(self, bits) -> float:
        bits = np.asarray(bits)
        if bits.shape != (self.bits_per_entry,):
            raise ValueError(f"expected {self.bits_per_entry} bits")
        return self.offset + self.scale * float((bits * (2 ** np.arange(self.bits_per_entry))).sum())

    def to_json(self) -> dict:
        return {"highest_bit": self.highest_bit, "scale": self.scale, "offset": self.offset}

    @staticmethod
    def from_json(doc: dict) -> "BitEncoding":
        return BitEncoding(doc["highest_bit"], doc["scale"], doc["offset"])


@dataclass(frozen=True)
class SourceBit:
    """Variable provenance: bit ``bit`` of layout entry ``entry``."""

    entry: int
    bit: int


@dataclass(frozen=True)
class Auxiliary:
    """Variable provenance: auxiliary replacing the product of ``pair``."""

    pair: tuple[int, int]
    penalty: float


Registry = list  # list[SourceBit | Auxiliary], indexed by variable


def build_binary_quartic(instance: ProblemInstance,
                         encoding: BitEncoding) -> tuple[Poly, Registry]:
    """Bit-expand every factor entry and square the cell residuals.

    Bit variable ``entry * bits_per_entry + j`` is bit j of layout entry
    ``entry`` (W entries row-major, then H entries row-major; the quartic
    slack variable has no binary counterpart).  The result is idempotence-
    reduced, so it is multilinear of degree <= 4.
    """
    if not encoding.covers(instance.domain):
        raise DomainNotCoveredError(
            f"encoding {encoding} does not cover domain {instance.domain}")
    layout = VariableLayout(instance.n, instance.m, instance.p)
    bpe = encoding.bits_per_entry
    nv = layout.num_entries * bpe

    def entry_poly(entry: int) -> Poly:
        p = Poly.constant(nv, encoding.offset)
        for j in range(bpe):
            p = p + Poly.monomial(nv, (entry * bpe + j,), encoding.scale * (2 ** j))
        return p

    w_polys = {(i, k): entry_poly(layout.w_index(i, k))
               for i in range(instance.n) for k in range(instance.p)}
    h_polys = {(k, j): entry_poly(layout.h_index(k, j))
               for k in range(instance.p) for j in range(instance.m)}

    total = Poly.constant(nv, 0.0)
    for i in range(instance.n):
        for j in range(instance.m):
            cell = Poly.constant(nv, float(instance.V[i, j]))
            for k in range(instance.p):
                cell = cell - w_polys[(i, k)].multiply(h_polys[(k, j)])
            total = total + cell.multiply(cell).idempotent_reduce()

    registry: Registry = [SourceBit(entry=v // bpe, bit=v % bpe) for v in range(nv)]
    return total.idempotent_reduce(), registry


@dataclass(frozen=True)
class PenaltyPolicy:
    """How the substitution penalty lambda is chosen.

    ``local`` (default): per substitution, 1 + sum of |coefficients| of the
    terms being rewritten, which is always large enough for exact
    min-equivalence.  ``global``: a single caller-supplied value.
    """

    mode: str = "local"
    value: Optional[float] = None

    def __post_init__(self):
        if self.mode not in ("local", "global"):
            raise ValueError(f"unknown penalty mode {self.mode!r}")
        if self.mode == "global" and (self.value is None or self.value <= 0):
            raise ValueError("global mode needs a positive value")


@dataclass
class QuboModel:
    """Quadratic binary model with per-variable provenance."""

    num_vars: int
    linear: dict
    quadratic: dict
    offset: float
    registry: Registry
    policy: PenaltyPolicy

    def __post_init__(self):
        self.linear = {int(i): float(c) for i, c in self.linear.items() if c != 0.0}
        quad = {}
        for (i, j), c in self.quadratic.items():
            if i == j:
                raise ValueError("diagonal quadratic entry; fold into linear instead")
            key = (int(min(i, j)), int(max(i, j)))
            if float(c) != 0.0:
                quad[key] = float(c)
        self.quadratic = quad

    @property
    def num_auxiliaries(self) -> int:
        return sum(1 for r in self.registry if isinstance(r, Auxiliary))

    @property
    def penalty(self) -> Optional[float]:
        """Smallest penalty in force; None when no auxiliary was needed."""
        lams = [r.penalty for r in self.registry if isinstance(r, Auxiliary)]
        return min(lams) if lams else None

    def evaluate(self, q) -> float:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.num_vars,):
            raise ValueError(f"expected {self.num_vars} bits, got shape {q.shape}")
        total = self.offset
        for i, c in self.linear.items():
            total += c * q[i]
        for (i, j), c in self.quadratic.items():
            total += c * q[i] * q[j]
        return float(total)

    def dense(self) -> tuple[np.ndarray, np.ndarray, float]:
        """(linear vector, symmetric coupling matrix, offset) for fast solvers."""
        u = np.zeros(self.num_vars)
        for i, c in self.linear.items():
            u[i] = c
        M = np.zeros((self.num_vars, self.num_vars))
        for (i, j), c in self.quadratic.items():
            M[i, j] = c
            M[j, i] = c
        return u, M, self.offset

    def to_json(self) -> dict:
        reg = []
        for r in self.registry:
            if isinstance(r, SourceBit):
                reg.append({"kind": "source", "entry": r.entry, "bit": r.bit})
            else:
                reg.append({"kind": "aux", "pair": list(r.pair), "penalty": r.penalty})
        return {
            "num_vars": self.num_vars,
            "offset": self.offset,
            "linear": [{"i": i, "u": c} for i, c in sorted(self.linear.items())],
            "quadratic": [{"i": i, "j": j, "v": c}
                          for (i, j), c in sorted(self.quadratic.items())],
            "registry": reg,
            "policy": {"mode": self.policy.mode, "value": self.policy.value},
        }

    @staticmethod
    def from_json(doc: dict) -> "QuboModel":
        registry: Registry = []
        for r in doc["registry"]:
            if r["kind"] == "source":
                registry.append(SourceBit(r["entry"], r["bit"]))
            else:
                registry.append(Auxiliary(tuple(r["pair"]), r["penalty"]))
        return QuboModel(
            num_vars=doc["num_vars"],
            linear={e["i"]: e["u"] for e in doc["linear"]},
            quadratic={(e["i"], e["j"]): e["v"] for e in doc["quadratic"]},
            offset=doc["offset"],
            registry=registry,
            policy=PenaltyPolicy(doc["policy"]["mode"], doc["policy"]["value"]),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @staticmethod
    def load(path) -> "QuboModel":
        with open(path) as fh:
            return QuboModel.from_json(json.load(fh))


def quadratize(poly: Poly, policy: PenaltyPolicy = PenaltyPolicy(),
               registry: Optional[Registry] = None) -> QuboModel:
    """Reduce a binary polynomial of degree <= 4 to a QUBO.

    Repeatedly substitutes the most frequent variable pair (ties broken by
    lowest (a, b)) across all degree >= 3 terms with a fresh auxiliary y,
    adding the penalty lambda * (q_a q_b - 2 q_a y - 2 q_b y + 3 y), until
    everything is quadratic.  Deterministic for a given input.
    """
    poly = poly.idempotent_reduce()
    if poly.degree() > 4:
        raise ValueError(f"expected degree <= 4, got {poly.degree()}")
    if registry is None:
        registry = [SourceBit(entry=i, bit=0) for i in range(poly.num_vars)]
    else:
        registry = list(registry)
    if len(registry) != poly.num_vars:
        raise ValueError("registry length does not match variable count")

    low = {k: c for k, c in poly.terms.items() if len(k) <= 2}
    high = {k: c for k, c in poly.terms.items() if len(k) >= 3}

    # pair -> set of high-term keys containing it, maintained incrementally
    pair_index: dict = {}

    def index_term(key):
        for ai in range(len(key)):
            for bi in range(ai + 1, len(key)):
                pair_index.setdefault((key[ai], key[bi]), set()).add(key)

    def unindex_term(key):
        for ai in range(len(key)):
            for bi in range(ai + 1, len(key)):
                bucket = pair_index.get((key[ai], key[bi]))
                if bucket is not None:
                    bucket.discard(key)
                    if not bucket:
                        del pair_index[(key[ai], key[bi])]

    for key in high:
        index_term(key)

    def add_low(key, coeff):
        low[key] = low.get(key, 0.0) + coeff
        if low[key] == 0.0:
            del low[key]

    num_vars = poly.num_vars
    while high:
        pair = min(pair_index, key=lambda p: (-len(pair_index[p]), p))
        affected = sorted(pair_index[pair])
        if policy.mode == "global":
            lam = float(policy.value)
        else:
            lam = 1.0 + sum(abs(high[k]) for k in affected)
        y = num_vars
        num_vars += 1
        registry.append(Auxiliary(pair=pair, penalty=lam))
        a, b = pair
        for key in affected:
            coeff = high.pop(key)
            unindex_term(key)
            new_key = tuple(sorted([v for v in key if v not in (a, b)] + [y]))
            if len(new_key) >= 3:
                if new_key in high:
                    unindex_term(new_key)
                    high[new_key] += coeff
                    if high[new_key] == 0.0:
                        del high[new_key]
                    else:
                        index_term(new_key)
                else:
                    high[new_key] = coeff
                    index_term(new_key)
            else:
                add_low(new_key, coeff)
        add_low((a, b), lam)
        add_low((y,), 3.0 * lam)
        add_low(tuple(sorted((a, y))), -2.0 * lam)
        add_low(tuple(sorted((b, y))), -2.0 * lam)

    linear = {k[0]: c for k, c in low.items() if len(k) == 1}
    quadratic = {k: c for k, c in low.items() if len(k) == 2}
    return QuboModel(num_vars=num_vars, linear=linear, quadratic=quadratic,
                     offset=poly.offset, registry=registry, policy=policy)


def decode_bits(assignment, encoding: BitEncoding, layout: VariableLayout,
                registry: Registry) -> FactorPair:
    """Reconstruct (W, H) from a bit assignment; auxiliaries are ignored."""
    assignment = np.asarray(assignment)
    if assignment.shape != (len(registry),):
        raise ValueError(f"expected {len(registry)} bits, got shape {assignment.shape}")
    values = np.full(layout.num_entries, encoding.offset, dtype=float)
    for var, prov in enumerate(registry):
        if isinstance(prov, SourceBit):
            values[prov.entry] += encoding.scale * (2 ** prov.bit) * float(assignment[var])
    x = np.concatenate([values, [0.0]])  # trailing slack for layout.decode
    return layout.decode(x)


@dataclass
class IsingModel:
    """Bipolar model E(sigma) = sum h_i sigma_i + sum_{i<j} J_ij sigma_i sigma_j + offset."""

    num_vars: int
    h: dict
    J: dict
    offset: float

    def __post_init__(self):
        self.h = {int(i): float(c) for i, c in self.h.items() if c != 0.0}
        J = {}
        for (i, j), c in self.J.items():
            if i == j:
                raise ValueError("diagonal coupling; sigma_i**2 == 1 folds into offset")
            key = (int(min(i, j)), int(max(i, j)))
            if float(c) != 0.0:
                J[key] = float(c)
        self.J = J

    def evaluate(self, sigma) -> float:
        sigma = np.asarray(sigma, dtype=float)
        if sigma.shape != (self.num_vars,):
            raise ValueError(f"expected {self.num_vars} spins")
        total = self.offset
        for i, c in self.h.items():
            total += c * sigma[i]
        for (i, j), c in self.J.items():
            total += c * sigma[i] * sigma[j]
        return float(total)


def qubo_to_ising(q: QuboModel) -> IsingModel:
    """Exact substitution q_i = (sigma_i + 1) / 2; total values are preserved."""
    h: dict = {}
    J: dict = {}
    offset = q.offset
    for i, u in q.linear.items():
        h[i] = h.get(i, 0.0) + u / 2.0
        offset += u / 2.0
    for (i, j), v in q.quadratic.items():
        J[(i, j)] = J.get((i, j), 0.0) + v / 4.0
        h[i] = h.get(i, 0.0) + v / 4.0
        h[j] = h.get(j, 0.0) + v / 4.0
        offset += v / 4.0
    return IsingModel(num_vars=q.num_vars, h=h, J=J, offset=offset)


def ising_to_qubo(e: IsingModel, registry: Optional[Registry] = None,
                  policy: PenaltyPolicy = PenaltyPolicy()) -> QuboModel:
    """Exact substitution sigma_i = 2 q_i - 1; inverse of qubo_to_ising."""
    linear: dict = {}
    quadratic: dict = {}
    offset = e.offset
    for i, hi in e.h.items():
        linear[i] = linear.get(i, 0.0) + 2.0 * hi
        offset -= hi
    for (i, j), Jij in e.J.items():
        quadratic[(i, j)] = quadratic.get((i, j), 0.0) + 4.0 * Jij
        linear[i] = linear.get(i, 0.0) - 2.0 * Jij
        linear[j] = linear.get(j, 0.0) - 2.0 * Jij
        offset += Jij
    if registry is None:
        registry = [SourceBit(entry=i, bit=0) for i in range(e.num_vars)]
    return QuboModel(num_vars=e.num_vars, linear=linear, quadratic=quadratic,
                     offset=offset, registry=registry, policy=policy)
