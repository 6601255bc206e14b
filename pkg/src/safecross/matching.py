"""Pairing neurons of two layers.

Every strategy returns two equal-length index lists ``(l_a, l_b)``: entry
``k`` says neuron ``l_a[k]`` of layer a is paired with neuron ``l_b[k]`` of
layer b. Indices are 0-based. Ties are always broken towards the lowest
index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .activation_stats import CorrelationMatrix
from .cca import CcaResult

MAPPING_FORMAT = "safecross-neuron-mapping"
MAPPING_FORMAT_VERSION = 1

Strategy = Literal["cca", "semi_match", "bipartite"]
Direction = Literal["a_to_b", "b_to_a"]


@dataclass
class NeuronMapping:
    pairs_per_depth: List[Tuple[List[int], List[int]]]
    strategy: Strategy
    direction: Optional[Direction] = None

    def __post_init__(self):
        self.pairs_per_depth = [([int(i) for i in l_a], [int(j) for j in l_b]) for l_a, l_b in self.pairs_per_depth]
        for depth, (l_a, l_b) in enumerate(self.pairs_per_depth, start=1):
            if len(l_a) != len(l_b):
                raise ValueError(f"depth {depth}: index lists differ in length")
            if self.strategy in ("cca", "bipartite") and (len(set(l_a)) != len(l_a) or len(set(l_b)) != len(l_b)):
                raise ValueError(f"depth {depth}: {self.strategy} mapping contains duplicates")

    def to_dict(self) -> dict:
        return {
            "format": MAPPING_FORMAT,
            "version": MAPPING_FORMAT_VERSION,
            "index_base": 0,
            "strategy": self.strategy,
            "direction": self.direction,
            "depths": [{"depth": d, "l_a": l_a, "l_b": l_b} for d, (l_a, l_b) in enumerate(self.pairs_per_depth, start=1)],
        }

    @classmethod
    def from_dict(cls, record: dict) -> "NeuronMapping":
        if record.get("format") != MAPPING_FORMAT or record.get("version") != MAPPING_FORMAT_VERSION:
            raise ValueError("not a version-1 neuron mapping record")
        depths = sorted(record["depths"], key=lambda e: e["depth"])
        return cls([(e["l_a"], e["l_b"]) for e in depths], record["strategy"], record.get("direction"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "NeuronMapping":
        return cls.from_dict(json.loads(text))


def match_cca(result: CcaResult) -> Tuple[List[int], List[int]]:
    """One neuron pair per canonical component, strongest components first.

    For component k the candidates are neuron pairs whose coefficients share a
    sign, scored by ``|w_a[i]| + |w_b[j]|``; the best pair with both neurons
    still unused is taken. If no same-sign pair is left, sign is ignored.
    """
    w_a, w_b = result.components_a, result.components_b
    n_comp = w_a.shape[1]
    if n_comp == 0:
        raise ValueError("CCA result has no components")
    used_a = np.zeros(w_a.shape[0], dtype=bool)
    used_b = np.zeros(w_b.shape[0], dtype=bool)
    l_a, l_b = [], []
    for k in range(n_comp):
        a, b = w_a[:, k], w_b[:, k]
        free = ~used_a[:, None] & ~used_b[None, :]
        same_sign = (np.sign(a)[:, None] * np.sign(b)[None, :] >= 0) & free
        allowed = same_sign if same_sign.any() else free
        score = np.where(allowed, np.abs(a)[:, None] + np.abs(b)[None, :], -np.inf)
        i, j = np.unravel_index(np.argmax(score), score.shape)
        used_a[i] = used_b[j] = True
        l_a.append(int(i))
        l_b.append(int(j))
    return l_a, l_b


def _values(corr) -> np.ndarray:
    return np.asarray(corr.values if isinstance(corr, CorrelationMatrix) else corr, dtype=np.float64)


def semi_match(corr, direction: Direction = "a_to_b") -> Tuple[List[int], List[int]]:
    """Pair each neuron of one layer with its most correlated partner; partners may repeat."""
    values = _values(corr)
    if direction == "a_to_b":
        return list(range(values.shape[0])), np.argmax(values, axis=1).tolist()
    if direction == "b_to_a":
        return np.argmax(values, axis=0).tolist(), list(range(values.shape[1]))
    raise ValueError(f"unknown direction {direction!r}")


def _assignment_value(values: np.ndarray, rows: Sequence[int], cols: Sequence[int]):
    if not rows:
        return 0.0, {}
    sub = values[np.ix_(rows, cols)]
    r, c = linear_sum_assignment(sub, maximize=True)
    return float(sub[r, c].sum()), {rows[i]: cols[j] for i, j in zip(r, c)}


def bipartite_match(corr) -> Tuple[List[int], List[int]]:
    """Maximum-weight perfect matching; among optimal matchings the lexicographically smallest ``l_b``."""
    values = _values(corr)
    p = values.shape[0]
    if values.ndim != 2 or values.shape[1] != p:
        raise ValueError(f"bipartite matching needs a square matrix, got {values.shape}")
    best, current = _assignment_value(values, list(range(p)), list(range(p)))
    tol = 1e-12 * p * max(1.0, float(np.abs(values).max(initial=0.0)))

    fixed_value = 0.0
    free_cols = list(range(p))
    l_b = []
    for i in range(p):
        rest_rows = list(range(i + 1, p))
        for j in free_cols:
            if j == current[i]:
                break
            rest_cols = [c for c in free_cols if c != j]
            head = fixed_value + values[i, j]
            # Row maxima bound the rest of the matching from above.
            if head + values[np.ix_(rest_rows, rest_cols)].max(axis=1).sum() < best - tol:
                continue
            value, assignment = _assignment_value(values, rest_rows, rest_cols)
            if head + value >= best - tol:
                current = {**current, i: j, **assignment}
                break
        j = current[i]
        fixed_value += values[i, j]
        free_cols.remove(j)
        l_b.append(j)
    return list(range(p)), l_b
