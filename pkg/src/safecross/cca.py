"""Canonical correlation analysis between two layer activation matrices.

Plain CCA is solved through the SVD of ``Ca^-1/2 Cab Cb^-1/2``. Two
regularised variants are provided: SVCCA (CCA on the top principal
directions of each view) and ridge CCA (``Ca + reg*I``, ``Cb + reg*I``).

Covariances use 1/n normalisation, so for standardized inputs ``reg`` is on
the scale of a correlation. Components are scaled by ``1/sqrt(n)`` so that
canonical variates ``z = L @ w`` have unit Euclidean norm.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .activation_stats import standardize


class RankCollapseError(ValueError):
    pass


@dataclass(frozen=True)
class CcaConfig:
    mode: Literal["plain", "svcca", "ridge"] = "plain"
    svd_directions: Optional[int] = None
    reg: float = 0.0
    covariance_jitter: float = 1e-8

    def __post_init__(self):
        if self.mode not in ("plain", "svcca", "ridge"):
            raise ValueError(f"unknown CCA mode {self.mode!r}")
        if self.reg < 0:
            raise ValueError("reg must be non-negative")
        if self.mode == "svcca" and (self.svd_directions is None or self.svd_directions < 1):
            raise ValueError("svcca mode needs a positive svd_directions")


@dataclass
class CcaResult:
    components_a: np.ndarray  # p x K, column k is w_a^k
    components_b: np.ndarray  # q x K
    correlations: np.ndarray  # K, non-increasing, in [0, 1]
    variates_a: np.ndarray  # n x K
    variates_b: np.ndarray

    @property
    def n_components(self) -> int:
        return len(self.correlations)


def _inv_sqrt(cov: np.ndarray, jitter: float, view: str) -> np.ndarray:
    evals, evecs = np.linalg.eigh(cov)
    if evals.max() < jitter:
        raise RankCollapseError(f"covariance of view {view} has collapsed to rank 0")
    evals = np.maximum(evals, jitter)
    return (evecs / np.sqrt(evals)) @ evecs.T


def _prepare(L, view: str) -> np.ndarray:
    x = np.asarray(L, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"view {view} must be a 2-d matrix")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"view {view} contains NaN or Inf")
    return x - x.mean(axis=0)


def _solve(x_a: np.ndarray, x_b: np.ndarray, reg: float, jitter: float) -> CcaResult:
    n, p = x_a.shape
    q = x_b.shape[1]
    if x_b.shape[0] != n:
        raise ValueError(f"views have {n} and {x_b.shape[0]} rows")
    if n <= max(p, q):
        warnings.warn(f"CCA with n={n} observations for {max(p, q)} dimensions is under-determined", stacklevel=3)
    c_a = x_a.T @ x_a / n + reg * np.eye(p)
    c_b = x_b.T @ x_b / n + reg * np.eye(q)
    c_ab = x_a.T @ x_b / n
    isq_a = _inv_sqrt(c_a, jitter, "a")
    isq_b = _inv_sqrt(c_b, jitter, "b")
    u, s, vt = np.linalg.svd(isq_a @ c_ab @ isq_b, full_matrices=False)
    w_a = isq_a @ u / np.sqrt(n)
    w_b = isq_b @ vt.T / np.sqrt(n)
    return CcaResult(w_a, w_b, np.clip(s, 0.0, 1.0), x_a @ w_a, x_b @ w_b)


def cca(L_a, L_b, cfg: Optional[CcaConfig] = None) -> CcaResult:
    """CCA of two standardized views, dispatching on ``cfg.mode``."""
    cfg = cfg or CcaConfig()
    if cfg.mode == "svcca":
        return svcca(L_a, L_b, cfg.svd_directions, cfg)
    reg = cfg.reg if cfg.mode == "ridge" else 0.0
    return _solve(_prepare(L_a, "a"), _prepare(L_b, "b"), reg, cfg.covariance_jitter)


def ridge_cca(L_a, L_b, reg: float, cfg: Optional[CcaConfig] = None) -> CcaResult:
    jitter = cfg.covariance_jitter if cfg else CcaConfig.covariance_jitter
    return cca(L_a, L_b, CcaConfig(mode="ridge", reg=reg, covariance_jitter=jitter))


def _top_directions(x: np.ndarray, k: int, view: str) -> np.ndarray:
    _, s, vt = np.linalg.svd(x, full_matrices=False)
    rank = int(np.sum(s > s[0] * 1e-10)) if s[0] > 0 else 0
    if rank == 0:
        raise RankCollapseError(f"view {view} has rank 0")
    if k > rank:
        warnings.warn(f"view {view} has rank {rank}; keeping {rank} directions instead of {k}", stacklevel=3)
        k = rank
    return vt[:k].T


def svcca(L_a, L_b, k: int, cfg: Optional[CcaConfig] = None) -> CcaResult:
    """CCA on the top-``k`` principal directions of each view.

    Components are mapped back to neuron coordinates through the retained
    right singular vectors, so ``components_a`` is ``p x K`` like plain CCA.
    """
    x_a, x_b = _prepare(L_a, "a"), _prepare(L_b, "b")
    if k > min(x_a.shape[1], x_b.shape[1]):
        raise ValueError(f"svd_directions={k} exceeds the narrower view width")
    jitter = cfg.covariance_jitter if cfg else CcaConfig.covariance_jitter
    v_a = _top_directions(x_a, k, "a")
    v_b = _top_directions(x_b, k, "b")
    reduced = _solve(x_a @ v_a, x_b @ v_b, 0.0, jitter)
    w_a = v_a @ reduced.components_a
    w_b = v_b @ reduced.components_b
    return CcaResult(w_a, w_b, reduced.correlations, reduced.variates_a, reduced.variates_b)


def bartlett_significant_count(result: CcaResult, n: int, p: int, q: int, alpha: float = 0.05) -> int:
    """Number of canonical correlations judged non-zero by Bartlett's sequential test.

    Step ``k`` tests whether correlations ``k+1..K`` all vanish using
    ``-(n - 1 - (p+q+1)/2) * sum(log(1 - rho_i^2))`` against a chi-square
    with ``(p-k)(q-k)`` degrees of freedom; counting stops at the first
    non-rejection.
    """
    rho = np.clip(result.correlations, 0.0, 1.0 - 1e-12)
    logs = np.log1p(-rho ** 2)
    scale = n - 1 - (p + q + 1) / 2
    for k in range(len(rho)):
        statistic = -scale * logs[k:].sum()
        if stats.chi2.sf(statistic, (p - k) * (q - k)) >= alpha:
            return k
    return len(rho)


class CCA(BaseEstimator, TransformerMixin):
    """Paired-view estimator: ``fit(X, Y)`` then ``transform(X, Y)`` to canonical variates.

    Both views are standardized with the statistics seen in ``fit``.
    """

    def __init__(self, mode="plain", svd_directions=None, reg=0.0, covariance_jitter=1e-8):
        self.mode = mode
        self.svd_directions = svd_directions
        self.reg = reg
        self.covariance_jitter = covariance_jitter

    def fit(self, X, Y):
        X = check_array(X, dtype=np.float64)
        Y = check_array(Y, dtype=np.float64)
        if len(X) != len(Y):
            raise ValueError("X and Y must have the same number of rows")
        cfg = CcaConfig(self.mode, self.svd_directions, self.reg, self.covariance_jitter)
        zx, self.mean_x_, self.std_x_, _ = standardize(X)
        zy, self.mean_y_, self.std_y_, _ = standardize(Y)
        self.result_ = cca(zx, zy, cfg)
        self.correlations_ = self.result_.correlations
        self.components_x_ = self.result_.components_a
        self.components_y_ = self.result_.components_b
        self.n_features_in_ = X.shape[1]
        return self

    @staticmethod
    def _scale(X, mean, std):
        safe = np.where(std > 0, std, 1.0)
        return np.where(std > 0, (X - mean) / safe, 0.0)

    def transform(self, X, Y=None):
        check_is_fitted(self, "result_")
        zx = self._scale(check_array(X, dtype=np.float64), self.mean_x_, self.std_x_) @ self.components_x_
        if Y is None:
            return zx
        zy = self._scale(check_array(Y, dtype=np.float64), self.mean_y_, self.std_y_) @ self.components_y_
        return zx, zy
