"""Classical factorization baseline: truncated SVD, NNDSVDA, HALS, fusion.

The SVD is a seed-free deterministic subspace iteration (started from
identity columns) so every downstream initialization is reproducible without
an RNG.  HALS performs exact closed-form column/row updates, which makes the
recorded objective history non-increasing sweep over sweep.  The fusion
pipeline warm-starts HALS from a stochastic solver run chosen by the
median-energy rule.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .matrices import (FactorPair, ProblemInstance, as_matrix, check_non_negative,
                       error_metrics, stream_rng)
from .quartic import VariableLayout
from .solvers import SolverRun
from .stats import median_select_index

__all__ = [
    "SvdConvergenceError",
    "NndsvdaInit",
    "RandomInit",
    "GivenInit",
    "FitResult",
    "truncated_svd",
    "nndsvda_init",
    "initialize",
    "hals_fit",
    "hals_update_w",
    "hals_update_h",
    "HalsSubsolver",
    "bcd_loop",
    "fusion_pipeline",
]

_DENOM_GUARD = 1e-12


class SvdConvergenceError(ArithmeticError):
    """Subspace iteration failed to stabilize within the iteration cap."""


def _qr_fixed(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # QR with non-negative R diagonal for a sign-deterministic iteration.
    Q, R = np.linalg.qr(a)
    signs = np.where(np.diag(R) < 0, -1.0, 1.0)
    return Q * signs, R * signs[:, None]


def truncated_svd(V, p: int, *, tol: float = 1e-11,
                  max_iter: int = 1000) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Top-p singular triplets by two-sided subspace iteration.

    Returns (U, S, Vt) with U (n, p), S (p,) non-increasing, Vt (p, m);
    U columns and Vt rows are orthonormal.  Deterministic: the iteration
    starts from the first p identity columns.
    """
    V = as_matrix(V, "V")
    n, m = V.shape
    if not (1 <= p <= min(n, m)):
        raise ValueError(f"p={p} must satisfy 1 <= p <= min{V.shape}")

    X = np.eye(m)[:, :p]
    prev = None
    U = None
    for _ in range(max_iter):
        U, _ = _qr_fixed(V @ X)
        X, R = _qr_fixed(V.T @ U)
        sig = np.abs(np.diag(R))
        if prev is not None and np.max(np.abs(sig - prev)) <= tol * (sig.max() + 1e-30):
            break
        prev = sig
    else:
        raise SvdConvergenceError(f"singular values did not stabilize in {max_iter} iterations")

    # Rotate the converged subspace so the small Gram matrix diagonalizes,
    # which separates any singular values the iteration left entangled.
    B = U.T @ V
    lam, Qrot = np.linalg.eigh(B @ B.T)
    order = np.argsort(lam)[::-1]
    lam = np.clip(lam[order], 0.0, None)
    U = U @ Qrot[:, order]
    S = np.sqrt(lam)

    Vt = np.zeros((p, m))
    tiny = max(S[0], 1.0) * 1e-14
    for k in range(p):
        if S[k] > tiny:
            Vt[k] = (U[:, k] @ V) / S[k]
    # Complete rows for zero singular values to keep Vt row-orthonormal.
    for k in range(p):
        if S[k] <= tiny:
            for cand in range(m):
                row = np.eye(m)[cand] - Vt.T @ (Vt @ np.eye(m)[cand])
                nrm = np.linalg.norm(row)
                if nrm > 1e-8:
                    Vt[k] = row / nrm
                    break

    # Deterministic sign convention: largest-|entry| of each U column positive.
    for k in range(p):
        pivot = np.argmax(np.abs(U[:, k]))
        if U[pivot, k] < 0:
            U[:, k] = -U[:, k]
            Vt[k] = -Vt[k]
    return U, S, Vt


def nndsvda_init(V, p: int, *, eps: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Non-negative double SVD initialization, averaging variant.

    Keeps the dominant sign-consistent section of each singular vector pair
    scaled by the singular value, then replaces the remaining zeros with the
    mean of V (Boutsidis & Gallopoulos 2008, variant A).
    """
    V = check_non_negative(as_matrix(V, "V"), "V")
    U, S, Vt = truncated_svd(V, p)
    n, m = V.shape
    W = np.zeros((n, p))
    H = np.zeros((p, m))

    W[:, 0] = np.sqrt(S[0]) * np.abs(U[:, 0])
    H[0, :] = np.sqrt(S[0]) * np.abs(Vt[0, :])

    for j in range(1, p):
        x, y = U[:, j], Vt[j, :]
        x_p, y_p = np.maximum(x, 0.0), np.maximum(y, 0.0)
        x_n, y_n = np.maximum(-x, 0.0), np.maximum(-y, 0.0)
        m_p = np.linalg.norm(x_p) * np.linalg.norm(y_p)
        m_n = np.linalg.norm(x_n) * np.linalg.norm(y_n)
        if max(m_p, m_n) == 0.0:
            continue  # dead direction; the averaging fill handles it
        if m_p >= m_n:
            u, v, sigma = x_p / np.linalg.norm(x_p), y_p / np.linalg.norm(y_p), m_p
        else:
            u, v, sigma = x_n / np.linalg.norm(x_n), y_n / np.linalg.norm(y_n), m_n
        scale = np.sqrt(S[j] * sigma)
        W[:, j] = scale * u
        H[j, :] = scale * v

    W[W < eps] = 0.0
    H[H < eps] = 0.0
    avg = V.mean()
    W[W == 0.0] = avg
    H[H == 0.0] = avg
    return W, H


@dataclass(frozen=True)
class NndsvdaInit:
    pass


@dataclass(frozen=True)
class RandomInit:
    seed: int = 0


@dataclass(frozen=True)
class GivenInit:
    W0: np.ndarray
    H0: np.ndarray

    def __post_init__(self):
        W0 = check_non_negative(as_matrix(self.W0, "W0"), "W0")
        H0 = check_non_negative(as_matrix(self.H0, "H0"), "H0")
        if W0.shape[1] != H0.shape[0]:
            raise ValueError("W0 and H0 do not conform")
        object.__setattr__(self, "W0", W0)
        object.__setattr__(self, "H0", H0)


InitStrategy = Union[NndsvdaInit, RandomInit, GivenInit]


def initialize(V: np.ndarray, p: int, init: InitStrategy) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(init, NndsvdaInit):
        return nndsvda_init(V, p)
    if isinstance(init, RandomInit):
        rng = stream_rng(init.seed, "random-init")
        n, m = V.shape
        return rng.random((n, p)), rng.random((p, m))
    if isinstance(init, GivenInit):
        n, m = V.shape
        if init.W0.shape != (n, p) or init.H0.shape != (p, m):
            raise ValueError("given factors do not match (n, p, m)")
        return init.W0.copy(), init.H0.copy()
    raise TypeError(f"unknown init strategy {init!r}")


@dataclass
class FitResult:
    factors: FactorPair
    objective_history: np.ndarray
    iterations: int
    converged: bool

    @property
    def W(self) -> np.ndarray:
        return self.factors.W

    @property
    def H(self) -> np.ndarray:
        return self.factors.H

    @property
    def final_objective(self) -> float:
        return float(self.objective_history[-1])

    def to_json(self) -> dict:
        return {
            "W": self.W.tolist(),
            "H": self.H.tolist(),
            "objective_history": [float(v) for v in self.objective_history],
            "iterations": self.iterations,
            "converged": self.converged,
        }


def hals_update_w(V: np.ndarray, W: np.ndarray, H: np.ndarray) -> np.ndarray:
    """One hierarchical sweep over the columns of W (exact per-column update)."""
    HHt = H @ H.T
    VHt = V @ H.T
    W = W.copy()
    for j in range(W.shape[1]):
        denom = HHt[j, j]
        if denom < _DENOM_GUARD:
            continue  # dead H row: any value is optimal, keep the current one
        W[:, j] = np.maximum(W[:, j] + (VHt[:, j] - W @ HHt[:, j]) / denom, 0.0)
    return W


def hals_update_h(V: np.ndarray, W: np.ndarray, H: np.ndarray) -> np.ndarray:
    """One hierarchical sweep over the rows of H."""
    WtW = W.T @ W
    WtV = W.T @ V
    H = H.copy()
    for j in range(H.shape[0]):
        denom = WtW[j, j]
        if denom < _DENOM_GUARD:
            continue
        H[j, :] = np.maximum(H[j, :] + (WtV[j, :] - WtW[j, :] @ H) / denom, 0.0)
    return H


def hals_fit(V, p: int, init: InitStrategy = NndsvdaInit(), max_iter: int = 500,
             tol: float = 1e-6) -> FitResult:
    """HALS sweeps until the Frobenius objective change drops below tol."""
    V = check_non_negative(as_matrix(V, "V"), "V")
    W, H = initialize(V, p, init)
    history = [float(np.linalg.norm(V - W @ H, "fro"))]
    converged = False
    sweeps = 0
    for sweeps in range(1, max_iter + 1):
        W = hals_update_w(V, W, H)
        H = hals_update_h(V, W, H)
        history.append(float(np.linalg.norm(V - W @ H, "fro")))
        if abs(history[-2] - history[-1]) < tol:
            converged = True
            break
    return FitResult(FactorPair(W, H), np.array(history), sweeps, converged)


class HalsSubsolver:
    """Block updates for the coordinate-descent shell (one sweep per call)."""

    def update_w(self, V, W, H):
        return hals_update_w(V, W, H)

    def update_h(self, V, W, H):
        return hals_update_h(V, W, H)


def bcd_loop(V, p: int, tol: float, maxcnt: int, subsolver=None,
             init: InitStrategy = NndsvdaInit()) -> FactorPair:
    """Alternate W and H block updates until the error reaches tol or maxcnt."""
    V = check_non_negative(as_matrix(V, "V"), "V")
    if subsolver is None:
        subsolver = HalsSubsolver()
    W, H = initialize(V, p, init)
    i = 1
    while np.linalg.norm(V - W @ H, "fro") > tol and i <= maxcnt:
        W = subsolver.update_w(V, W, H)
        H = subsolver.update_h(V, W, H)
        i += 1
    return FactorPair(W, H)


def fusion_pipeline(instance: ProblemInstance, layout: VariableLayout,
                    runs: Sequence[SolverRun], max_iter: int = 500,
                    tol: float = 1e-6,
                    selected_index: Optional[list] = None) -> FitResult:
    """Warm-start HALS from the solver run whose energy is closest to the
    median energy (lower-middle median; ties go to the lower energy, then the
    lower run index)."""
    if not runs:
        raise ValueError("fusion needs at least one solver run")
    pick = median_select_index([r.best_energy for r in runs])
    if selected_index is not None:
        selected_index.append(pick)
    warm = layout.decode(runs[pick].best_x)
    return hals_fit(instance.V, instance.p, GivenInit(warm.W, warm.H),
                    max_iter=max_iter, tol=tol)


def fit_relative_error(V: np.ndarray, result: FitResult) -> float:
    return error_metrics(V, result.factors.product())[1]
