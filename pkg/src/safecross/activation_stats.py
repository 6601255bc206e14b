"""Neuron activation matrices and their (cross-)correlation.

A neuron is represented by its activations over a fixed probe batch, so a
hidden layer becomes an ``n x p`` matrix whose column ``j`` belongs to
neuron ``j``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Set, Tuple

import numpy as np

# Columns whose variance falls below this are treated as dead neurons.
VARIANCE_FLOOR = 1e-12


@dataclass
class LayerActivations:
    values: np.ndarray
    depth: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("activations must be an n x p matrix")
        if self.values.shape[0] < 2:
            raise ValueError("at least two probe points are needed")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("activations contain NaN or Inf")

    @property
    def probe_size(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass
class CorrelationMatrix:
    values: np.ndarray
    kind: Literal["within", "cross"]


def _as_activations(L) -> LayerActivations:
    return L if isinstance(L, LayerActivations) else LayerActivations(L)


def standardize(L) -> Tuple[np.ndarray, np.ndarray, np.ndarray, Set[int]]:
    """Zero-mean, unit-variance columns (variance uses 1/n).

    Returns ``(standardized, means, stds, degenerate)``; degenerate columns
    come back as zeros.
    """
    x = _as_activations(L).values
    means = x.mean(axis=0)
    centred = x - means
    var = np.mean(centred ** 2, axis=0)
    stds = np.sqrt(var)
    dead = var < VARIANCE_FLOOR
    out = np.zeros_like(centred)
    out[:, ~dead] = centred[:, ~dead] / stds[~dead]
    return out, means, stds, set(np.flatnonzero(dead).tolist())


def _unit_columns(x: np.ndarray) -> np.ndarray:
    # Centred columns scaled to unit Euclidean norm; dead columns become zero.
    centred = x - x.mean(axis=0)
    norms = np.sqrt(np.sum(centred ** 2, axis=0))
    alive = norms ** 2 >= VARIANCE_FLOOR * len(x)
    out = np.zeros_like(centred)
    out[:, alive] = centred[:, alive] / norms[alive]
    return out


def cross_correlation(L_a, L_b) -> CorrelationMatrix:
    """Pearson correlation between every neuron of ``L_a`` and every neuron of ``L_b``.

    Rows index ``L_a``, columns ``L_b``. Dead neurons correlate 0 with everything.
    """
    a, b = _as_activations(L_a), _as_activations(L_b)
    if a.probe_size != b.probe_size:
        raise ValueError(f"probe sizes differ: {a.probe_size} vs {b.probe_size}")
    corr = _unit_columns(a.values).T @ _unit_columns(b.values)
    return CorrelationMatrix(np.clip(corr, -1.0, 1.0), "cross")


def within_correlation(L) -> CorrelationMatrix:
    return CorrelationMatrix(cross_correlation(L, L).values, "within")
