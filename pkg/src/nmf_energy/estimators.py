"""Scikit-learn compatible estimator layer.

The three end-to-end factorization routes are exposed with the standard
``fit`` / ``fit_transform`` / ``transform`` / ``inverse_transform`` surface so
they drop into pipelines and model-selection tooling: ``HalsNMF`` (the
classical baseline), ``EnergyNMF`` (the sum-constrained stochastic solver on
the quartic objective) and ``FusionNMF`` (solver warm start polished by HALS).

After ``fit``, ``components_`` holds H and ``transform`` returns W, matching
the usual decomposition convention (X ~ transform(X) @ components_).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .classic import GivenInit, NndsvdaInit, RandomInit, hals_fit, hals_update_w
from .matrices import ContinuousDomain, ProblemInstance, as_matrix, check_non_negative
from .quartic import build_quartic_model
from .solvers import SCHEDULES, solve_continuous
from .stats import median_select_index

__all__ = ["HalsNMF", "EnergyNMF", "FusionNMF"]


class _NMFBase(BaseEstimator, TransformerMixin):
    """Shared validation, transform and reconstruction plumbing."""

    def _validate(self, X) -> np.ndarray:
        X = check_non_negative(as_matrix(X, "X"), "X")
        n, m = X.shape
        if not (1 <= self.n_components <= min(n, m)):
            raise ValueError(
                f"n_components={self.n_components} must be in [1, min{X.shape}]")
        return X

    def _check_fitted(self):
        if getattr(self, "components_", None) is None:
            raise NotFittedError("call fit before using this estimator")

    def fit(self, X, y=None):
        self.fit_transform(X)
        return self

    def transform(self, X):
        """Least-squares non-negative W for X against the fitted components."""
        self._check_fitted()
        X = check_non_negative(as_matrix(X, "X"), "X")
        if X.shape[1] != self.components_.shape[1]:
            raise ValueError("X has a different number of columns than fit data")
        W = np.full((X.shape[0], self.n_components), X.mean() + 1e-12)
        for _ in range(200):
            W_next = hals_update_w(X, W, self.components_)
            if np.abs(W_next - W).max() < 1e-10:
                W = W_next
                break
            W = W_next
        return W

    def inverse_transform(self, W):
        self._check_fitted()
        return as_matrix(W, "W") @ self.components_

    def _finish(self, X, W, H):
        self.components_ = H
        self.n_components_ = self.n_components
        self.reconstruction_err_ = float(np.linalg.norm(X - W @ H, "fro"))
        return W


class HalsNMF(_NMFBase):
    """Non-negative factorization by hierarchical alternating least squares.

    Parameters follow the common decomposition API: ``n_components`` is the
    inner rank, ``init`` one of 'nndsvda' | 'random', ``max_iter`` the sweep
    budget and ``tol`` the stopping threshold on the objective change.
    """

    def __init__(self, n_components=2, init="nndsvda", max_iter=500, tol=1e-6,
                 random_state=0):
        self.n_components = n_components
        self.init = init
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state

    def _init_strategy(self):
        if self.init == "nndsvda":
            return NndsvdaInit()
        if self.init == "random":
            return RandomInit(seed=self.random_state)
        raise ValueError(f"unknown init {self.init!r}")

    def fit_transform(self, X, y=None):
        X = self._validate(X)
        result = hals_fit(X, self.n_components, self._init_strategy(),
                          max_iter=self.max_iter, tol=self.tol)
        self.n_iter_ = result.iterations
        self.objective_history_ = result.objective_history
        return self._finish(X, result.W, result.H)


class EnergyNMF(_NMFBase):
    """Factorization by stochastic search on the quartic energy.

    Runs the sum-constrained continuous solver ``n_runs`` times on the
    squared-error polynomial over the entries of W and H, keeps every run's
    energy and decodes the run selected by ``selection`` ('best' energy or the
    median-energy rule used by the fusion pipeline).
    """

    def __init__(self, n_components=2, schedule=2, n_runs=10, selection="best",
                 sum_target=None, random_state=0):
        self.n_components = n_components
        self.schedule = schedule
        self.n_runs = n_runs
        self.selection = selection
        self.sum_target = sum_target
        self.random_state = random_state

    def _solve_runs(self, X):
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {sorted(SCHEDULES)}")
        if self.selection not in ("best", "median"):
            raise ValueError(f"unknown selection {self.selection!r}")
        n, m = X.shape
        instance = ProblemInstance(
            V=X, n=n, m=m, p=self.n_components, domain=ContinuousDomain(),
            case_id="estimator", seed=int(self.random_state))
        model = build_quartic_model(instance, sum_target=self.sum_target)
        runs = [solve_continuous(model, SCHEDULES[self.schedule],
                                 seed=int(self.random_state) + 7919 * r)
                for r in range(self.n_runs)]
        return model, runs

    def _select(self, runs) -> int:
        energies = [r.best_energy for r in runs]
        if self.selection == "best":
            return int(np.argmin(energies))
        return median_select_index(energies)

    def fit_transform(self, X, y=None):
        X = self._validate(X)
        model, runs = self._solve_runs(X)
        pick = self._select(runs)
        factors = model.decode(runs[pick].best_x)
        self.energies_ = np.array([r.best_energy for r in runs])
        self.selected_run_ = pick
        return self._finish(X, factors.W, factors.H)


class FusionNMF(EnergyNMF):
    """Energy-solver warm start polished by HALS.

    The median-energy run provides (W0, H0); HALS then refines both factors,
    so the final objective never exceeds the warm start's.
    """

    def __init__(self, n_components=2, schedule=2, n_runs=10, max_iter=500,
                 tol=1e-6, sum_target=None, random_state=0):
        super().__init__(n_components=n_components, schedule=schedule,
                         n_runs=n_runs, selection="median",
                         sum_target=sum_target, random_state=random_state)
        self.max_iter = max_iter
        self.tol = tol

    def fit_transform(self, X, y=None):
        X = self._validate(X)
        model, runs = self._solve_runs(X)
        pick = self._select(runs)
        warm = model.decode(runs[pick].best_x)
        result = hals_fit(X, self.n_components, GivenInit(warm.W, warm.H),
                          max_iter=self.max_iter, tol=self.tol)
        self.energies_ = np.array([r.best_energy for r in runs])
        self.selected_run_ = pick
        self.n_iter_ = result.iterations
        self.objective_history_ = result.objective_history
        return self._finish(X, result.W, result.H)
