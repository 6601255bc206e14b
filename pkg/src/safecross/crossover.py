"""Functional alignment of two networks and arithmetic crossover between them."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .activation_stats import cross_correlation, standardize
from .cca import CcaConfig, cca
from .matching import NeuronMapping, bipartite_match, match_cca, semi_match
from .mlp import Dataset, Network, evaluate, forward

METHODS = ("naive", "sc_pwc_semi", "sc_pwc_bipartite", "sc_cca")
METHOD_STRATEGY = {"sc_pwc_semi": "semi_match", "sc_pwc_bipartite": "bipartite", "sc_cca": "cca"}


class ArchitectureMismatch(ValueError):
    pass


class SweepError(RuntimeError):
    def __init__(self, t: float, cause: Exception):
        super().__init__(f"evaluation failed at t={t}: {cause}")
        self.t = t


@dataclass
class AlignedPair:
    net_a_aligned: Network
    net_b_aligned: Network
    mapping: NeuronMapping
    provenance: Dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class SweepRecord:
    pair_id: str
    method: str
    t: float
    loss: float
    accuracy: float


def default_t_grid() -> np.ndarray:
    return np.linspace(-0.25, 1.25, 61)


def _check_same(net_a: Network, net_b: Network) -> None:
    if net_a.architecture.layer_sizes != net_b.architecture.layer_sizes:
        raise ArchitectureMismatch(
            f"architectures differ: {net_a.architecture.layer_sizes} vs {net_b.architecture.layer_sizes}"
        )


def complete_order(order: Sequence[int], width: int) -> List[int]:
    """Append the neurons missing from a duplicate-free partial order, ascending."""
    order = [int(i) for i in order]
    if len(order) > width:
        raise ValueError(f"index list of length {len(order)} for a layer of width {width}")
    seen = set(order)
    if len(seen) != len(order):
        raise ValueError("cannot complete an index list that repeats neurons")
    return order + [i for i in range(width) if i not in seen]


def permute_network(net: Network, index_lists: Sequence[Sequence[int]],
                    row_lists: Optional[Sequence[Sequence[int]]] = None) -> Network:
    """Reorder the hidden neurons of ``net`` layer by layer.

    For hidden layer d the columns of ``W^d`` and its bias follow
    ``index_lists[d]``; the rows of ``W^{d+1}`` follow ``row_lists[d]``
    (default: the same list). Lists may repeat indices, in which case neurons
    are duplicated and others dropped. Partial duplicate-free lists are
    completed with the missing neurons in ascending order.
    """
    sizes = net.architecture.layer_sizes
    depth = net.architecture.depth
    row_lists = index_lists if row_lists is None else row_lists
    if len(index_lists) != depth or len(row_lists) != depth:
        raise ValueError(f"need one index list per hidden layer ({depth})")
    weights = list(net.weights)
    biases = list(net.biases)
    for d in range(depth):
        width = sizes[d + 1]
        cols, rows = list(index_lists[d]), list(row_lists[d])
        for order in (cols, rows):
            if any(i < 0 or i >= width for i in order):
                raise IndexError(f"hidden layer {d + 1}: neuron index out of range for width {width}")
        if len(cols) < width:
            cols = complete_order(cols, width)
        if len(rows) < width:
            rows = complete_order(rows, width)
        weights[d] = weights[d][:, cols]
        biases[d] = biases[d][cols]
        weights[d + 1] = weights[d + 1][rows, :]
    return Network(weights, biases, net.architecture)


def layer_mapping(L_a: np.ndarray, L_b: np.ndarray, strategy: str, cfg: Optional[CcaConfig] = None,
                  direction: str = "a_to_b"):
    """Index lists pairing the neurons of one layer of each network."""
    if strategy == "cca":
        z_a, *_ = standardize(L_a)
        z_b, *_ = standardize(L_b)
        return match_cca(cca(z_a, z_b, cfg))
    corr = cross_correlation(L_a, L_b)
    if strategy == "semi_match":
        return semi_match(corr, direction)
    if strategy == "bipartite":
        return bipartite_match(corr)
    raise ValueError(f"unknown strategy {strategy!r}")


def align_pair(net_a: Network, net_b: Network, strategy: str, probe, cfg: Optional[CcaConfig] = None,
               direction: str = "a_to_b", literal_rows: bool = False,
               provenance: Optional[Dict[str, str]] = None) -> AlignedPair:
    """Match hidden neurons depth by depth on ``probe`` and permute both networks.

    ``literal_rows=True`` reorders network b's outgoing rows with network a's
    list, as the published permutation routine is printed; the default uses
    network b's own list, which keeps it functionally equivalent.
    """
    _check_same(net_a, net_b)
    inputs = probe.inputs if isinstance(probe, Dataset) else np.asarray(probe, dtype=np.float64)
    if len(inputs) == 0:
        raise ValueError("probe batch is empty")
    acts_a, _ = forward(net_a, inputs)
    acts_b, _ = forward(net_b, inputs)
    pairs = [layer_mapping(L_a, L_b, strategy, cfg, direction) for L_a, L_b in zip(acts_a, acts_b)]
    mapping = NeuronMapping(pairs, strategy, direction if strategy == "semi_match" else None)
    lists_a = [l_a for l_a, _ in pairs]
    lists_b = [l_b for _, l_b in pairs]
    aligned_a = permute_network(net_a, lists_a)
    aligned_b = permute_network(net_b, lists_b, lists_a if literal_rows else None)
    return AlignedPair(aligned_a, aligned_b, mapping, dict(provenance or {}))


def interpolate(net_a: Network, net_b: Network, t: float) -> Network:
    """Elementwise ``(1 - t) * a + t * b`` over every weight and bias.

    The coefficient of ``b`` is evaluated as ``1 - (1 - t)`` so that swapping
    the parents and using ``1 - t`` gives bit-identical offspring.
    """
    _check_same(net_a, net_b)
    c_a = 1.0 - float(t)
    c_b = 1.0 - c_a
    weights = [c_a * wa + c_b * wb for wa, wb in zip(net_a.weights, net_b.weights)]
    biases = [c_a * ba + c_b * bb for ba, bb in zip(net_a.biases, net_b.biases)]
    return Network(weights, biases, net_a.architecture)


def sweep(net_a: Network, net_b: Network, t_grid, eval_set: Dataset, method: str, pair_id: str) -> List[SweepRecord]:
    grid = sorted(float(t) for t in t_grid)
    if not grid:
        raise ValueError("t grid is empty")
    records = []
    for t in grid:
        try:
            loss, acc = evaluate(interpolate(net_a, net_b, t), eval_set)
        except Exception as exc:
            raise SweepError(t, exc) from exc
        records.append(SweepRecord(str(pair_id), method, t, loss, acc))
    return records


class SafeCrossover(BaseEstimator):
    """Align two parents on a probe batch, then produce offspring by interpolation.

    ``fit(net_a, net_b, X_probe)`` stores the aligned parents; ``offspring(t)``
    and ``sweep(data)`` operate on them. ``strategy=None`` skips alignment,
    giving naive crossover.
    """

    def __init__(self, strategy="bipartite", direction="a_to_b", cca_mode="plain", svd_directions=None, reg=0.0):
        self.strategy = strategy
        self.direction = direction
        self.cca_mode = cca_mode
        self.svd_directions = svd_directions
        self.reg = reg

    def fit(self, net_a: Network, net_b: Network, X_probe=None):
        if self.strategy is None:
            _check_same(net_a, net_b)
            self.parents_ = (net_a, net_b)
            self.mapping_ = None
            return self
        X_probe = check_array(X_probe, dtype=np.float64)
        cfg = CcaConfig(self.cca_mode, self.svd_directions, self.reg)
        pair = align_pair(net_a, net_b, self.strategy, X_probe, cfg, self.direction)
        self.parents_ = (pair.net_a_aligned, pair.net_b_aligned)
        self.mapping_ = pair.mapping
        return self

    def offspring(self, t: float = 0.5) -> Network:
        check_is_fitted(self, "parents_")
        return interpolate(*self.parents_, t)

    def sweep(self, data: Dataset, t_grid=None, pair_id="0") -> List[SweepRecord]:
        check_is_fitted(self, "parents_")
        method = "naive" if self.strategy is None else {v: k for k, v in METHOD_STRATEGY.items()}[self.strategy]
        return sweep(*self.parents_, default_t_grid() if t_grid is None else t_grid, data, method, pair_id)
