"""Experiment orchestration: train a population, pair it, sweep every crossover method.

Output directory layout::

    records.csv          pair_id,method,t,loss,accuracy  (sorted, 9 significant digits)
    pair_stats.json      per-pair Bartlett counts and high-correlation pair counts
    summary.json         aggregate statistics (see ExperimentSummary)
    mappings/<pair>_<method>.json
    networks/net_<i>.scnet
"""

from __future__ import annotations

import csv
import io
import json
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .activation_stats import cross_correlation, standardize
from .cca import CcaConfig, bartlett_significant_count, cca
from .crossover import METHOD_STRATEGY, METHODS, SweepRecord, align_pair, sweep
from .datasets import find_mnist, generate_blobs, load_cifar10_batches, load_digits, load_mnist_idx, split
from .matching import bipartite_match
from .mlp import Architecture, Dataset, Network, TrainConfig, forward, init_network, save_network, train_adam

log = logging.getLogger(__name__)

CSV_HEADER = ("pair_id", "method", "t", "loss", "accuracy")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    dataset: Dict = field(default_factory=lambda: {"source": "blobs"})
    hidden_sizes: Sequence[int] = (64,)
    train: TrainConfig = field(default_factory=TrainConfig)
    n_nets: int = 20
    n_pairs: int = 10
    n_probe: int = 2000
    methods: Sequence[str] = ("sc_pwc_bipartite",)
    cca: CcaConfig = field(default_factory=CcaConfig)
    t_grid: Dict = field(default_factory=lambda: {"start": -0.25, "stop": 1.25, "num": 61})
    output_dir: Optional[str] = None
    seed: int = 0
    workers: int = 1
    correlation_threshold: float = 0.7
    bartlett_alpha: float = 0.05

    def __post_init__(self):
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)
        self.methods = tuple(m for m in self.methods if m != "naive")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ConfigError(f"unknown methods {sorted(unknown)}; choose from {METHODS}")
        if self.n_pairs < 1 or 2 * self.n_pairs > self.n_nets:
            raise ConfigError(f"{self.n_pairs} disjoint pairs need at least {2 * self.n_pairs} networks, got {self.n_nets}")
        if self.n_probe < 2:
            raise ConfigError("n_probe must be at least 2")
        if int(self.t_grid.get("num", 0)) < 1:
            raise ConfigError("t grid needs at least one point")

    def grid(self) -> np.ndarray:
        return np.linspace(float(self.t_grid["start"]), float(self.t_grid["stop"]), int(self.t_grid["num"]))

    def to_dict(self) -> Dict:
        out = asdict(self)
        out["hidden_sizes"] = list(self.hidden_sizes)
        out["methods"] = list(self.methods)
        return out

    @classmethod
    def from_dict(cls, raw: Dict) -> "ExperimentConfig":
        raw = dict(raw)
        try:
            if "train" in raw:
                raw["train"] = TrainConfig(**raw["train"])
            if "cca" in raw:
                raw["cca"] = CcaConfig(**raw["cca"])
            return cls(**raw)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    return ExperimentConfig.from_dict(json.loads(Path(path).read_text()))


@dataclass
class ExperimentSummary:
    curves: Dict[str, List[Dict]]
    wins: Dict[str, Dict]
    path_wins: Dict[str, Dict]
    bartlett_counts: Dict[str, List[int]]
    high_correlation_counts: Dict[str, List[int]]
    completed_pairs: List[str]
    failures: Dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def load_dataset(spec: Dict) -> Dataset:
    source = spec.get("source")
    if source == "mnist":
        if "images" in spec and "labels" in spec:
            images, labels = spec["images"], spec["labels"]
        else:
            images, labels = find_mnist(spec.get("data_dir"))
        data = load_mnist_idx(images, labels)
    elif source == "cifar10":
        data = load_cifar10_batches(spec["batches"])
    elif source == "digits":
        data = load_digits()
    elif source == "blobs":
        data = generate_blobs(spec.get("classes", 3), spec.get("per_class", 50), spec.get("dim", 10),
                              spec.get("spread", 1.0), spec.get("seed", 0))
    else:
        raise ConfigError(f"unknown dataset source {source!r}")
    if spec.get("subset"):
        data = data.subset(slice(0, int(spec["subset"])))
    return data


def _seeds(master: int, count: int) -> List[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(master).spawn(count)]


# Child seeds 0-2 drive split, probe draw and pairing; 3.. seed the networks.
_N_AUX_SEEDS = 3


def format_records_csv(records: Sequence[SweepRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in sorted(records, key=lambda r: (r.pair_id, r.method, r.t)):
        writer.writerow([r.pair_id, r.method, f"{r.t:.9g}", f"{r.loss:.9g}", f"{r.accuracy:.9g}"])
    return buf.getvalue()


def parse_records_csv(text: str) -> List[SweepRecord]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {reader.fieldnames}")
    return [SweepRecord(row["pair_id"], row["method"], float(row["t"]), float(row["loss"]), float(row["accuracy"]))
            for row in reader]


def pair_statistics(net_a: Network, net_b: Network, probe: np.ndarray, cca_cfg: CcaConfig,
                    threshold: float = 0.7, alpha: float = 0.05) -> Dict[str, List[int]]:
    """Per hidden layer: Bartlett-significant canonical correlations and matched pairs correlating >= threshold."""
    acts_a, _ = forward(net_a, probe)
    acts_b, _ = forward(net_b, probe)
    bartlett, high = [], []
    for L_a, L_b in zip(acts_a, acts_b):
        z_a, *_ = standardize(L_a)
        z_b, *_ = standardize(L_b)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            result = cca(z_a, z_b, cca_cfg)
        dims = result.n_components if cca_cfg.mode == "svcca" else None
        p, q = (dims, dims) if dims else (L_a.shape[1], L_b.shape[1])
        bartlett.append(bartlett_significant_count(result, len(probe), p, q, alpha))
        corr = cross_correlation(L_a, L_b).values
        if corr.shape[0] == corr.shape[1]:
            l_a, l_b = bipartite_match(corr)
            high.append(int(np.sum(corr[l_a, l_b] >= threshold)))
    return {"bartlett": bartlett, "high_correlation": high}


def _nearest(ts: Sequence[float], target: float) -> float:
    return min(ts, key=lambda t: (abs(t - target), t))


def summarize(records: Sequence[SweepRecord], pair_stats: Optional[Dict[str, Dict]] = None,
              failures: Optional[Dict[str, str]] = None) -> ExperimentSummary:
    """Aggregate sweep records.

    A safe method wins a pair when its loss at the grid point nearest
    ``t = 0.5`` is strictly below naive's. The path comparison checks that
    the safe method's worst loss over ``t in [0, 1]`` does not exceed naive's.
    """
    if not records:
        raise ValueError("no records to summarize")
    by_key: Dict[tuple, List[SweepRecord]] = {}
    by_pair: Dict[str, Dict[str, List[SweepRecord]]] = {}
    for r in records:
        by_key.setdefault((r.method, r.t), []).append(r)
        by_pair.setdefault(r.pair_id, {}).setdefault(r.method, []).append(r)

    curves: Dict[str, List[Dict]] = {}
    for (method, t), group in sorted(by_key.items()):
        losses = np.array([r.loss for r in group])
        accs = np.array([r.accuracy for r in group])
        curves.setdefault(method, []).append({
            "t": t, "n": len(group),
            "loss_mean": float(losses.mean()), "loss_std": float(losses.std()),
            "accuracy_mean": float(accs.mean()), "accuracy_std": float(accs.std()),
        })

    safe_methods = sorted({r.method for r in records} - {"naive"})
    wins = {m: {"wins": 0, "pairs": 0, "per_pair": {}} for m in safe_methods}
    path_wins = {m: {"wins": 0, "pairs": 0, "per_pair": {}} for m in safe_methods}
    for pair_id, methods in sorted(by_pair.items()):
        naive = methods.get("naive")
        if not naive:
            warnings.warn(f"pair {pair_id} has no naive baseline; excluded from win counts")
            continue
        naive_at = {r.t: r.loss for r in naive}
        naive_path = max((r.loss for r in naive if 0.0 <= r.t <= 1.0), default=None)
        for m in safe_methods:
            if m not in methods:
                continue
            safe_at = {r.t: r.loss for r in methods[m]}
            common = sorted(set(safe_at) & set(naive_at))
            if common:
                t_mid = _nearest(common, 0.5)
                won = bool(safe_at[t_mid] < naive_at[t_mid])
                wins[m]["per_pair"][pair_id] = won
                wins[m]["pairs"] += 1
                wins[m]["wins"] += won
            safe_path = max((r.loss for r in methods[m] if 0.0 <= r.t <= 1.0), default=None)
            if safe_path is not None and naive_path is not None:
                ok = bool(safe_path <= naive_path)
                path_wins[m]["per_pair"][pair_id] = ok
                path_wins[m]["pairs"] += 1
                path_wins[m]["wins"] += ok

    pair_stats = pair_stats or {}
    return ExperimentSummary(
        curves=curves,
        wins=wins,
        path_wins=path_wins,
        bartlett_counts={p: list(s.get("bartlett", [])) for p, s in sorted(pair_stats.items())},
        high_correlation_counts={p: list(s.get("high_correlation", [])) for p, s in sorted(pair_stats.items())},
        completed_pairs=sorted(by_pair),
        failures=dict(sorted((failures or {}).items())),
    )


def train_population(cfg: ExperimentConfig, train: Dataset, n_classes: int) -> List[Network]:
    arch = Architecture(train.inputs.shape[1], cfg.hidden_sizes, n_classes)
    seeds = _seeds(cfg.seed, _N_AUX_SEEDS + cfg.n_nets)[_N_AUX_SEEDS:]

    def one(seed: int) -> Network:
        net, _ = train_adam(init_network(arch, seed), train, replace(cfg.train, seed=seed))
        return net

    with ThreadPoolExecutor(max_workers=max(1, cfg.workers)) as pool:
        return list(pool.map(one, seeds))


def _run_pair(cfg: ExperimentConfig, pair_id: str, net_a: Network, net_b: Network, probe: np.ndarray,
              validation: Dataset, grid: np.ndarray):
    records = list(sweep(net_a, net_b, grid, validation, "naive", pair_id))
    mappings = {}
    for method in cfg.methods:
        pair = align_pair(net_a, net_b, METHOD_STRATEGY[method], probe, cfg.cca,
                          provenance={"pair_id": pair_id})
        mappings[method] = pair.mapping
        records.extend(sweep(pair.net_a_aligned, pair.net_b_aligned, grid, validation, method, pair_id))
    stats = pair_statistics(net_a, net_b, probe, cfg.cca, cfg.correlation_threshold, cfg.bartlett_alpha)
    return records, mappings, stats


def run_experiment(cfg: ExperimentConfig, networks: Optional[Sequence[Network]] = None,
                   output_dir=None) -> ExperimentSummary:
    """Train (or accept) a population, sweep every pair, write artifacts, return the summary.

    ``networks`` bypasses training; it must hold ``cfg.n_nets`` networks.
    """
    split_seed, probe_seed, pair_seed = _seeds(cfg.seed, _N_AUX_SEEDS)
    data = load_dataset(cfg.dataset)
    n_classes = int(cfg.dataset.get("classes") or data.labels.max() + 1)
    parts = split(data, split_seed)

    if networks is None:
        networks = train_population(cfg, parts.train, n_classes)
    elif len(networks) != cfg.n_nets:
        raise ConfigError(f"expected {cfg.n_nets} networks, got {len(networks)}")

    order = np.random.default_rng(pair_seed).permutation(cfg.n_nets)[: 2 * cfg.n_pairs].reshape(cfg.n_pairs, 2)
    pairs = [(f"{k:03d}", int(a), int(b)) for k, (a, b) in enumerate(order)]
    n_probe = min(cfg.n_probe, len(parts.train))
    probe = parts.train.inputs[np.random.default_rng(probe_seed).permutation(len(parts.train))[:n_probe]]
    grid = cfg.grid()

    def work(item):
        pair_id, a, b = item
        try:
            return pair_id, _run_pair(cfg, pair_id, networks[a], networks[b], probe, parts.validation, grid), None
        except Exception as exc:  # a failing pair is recorded and skipped
            log.warning("pair %s failed: %s", pair_id, exc)
            return pair_id, None, f"{type(exc).__name__}: {exc}"

    with ThreadPoolExecutor(max_workers=max(1, cfg.workers)) as pool:
        results = sorted(pool.map(work, pairs), key=lambda r: r[0])

    records, mappings, stats, failures = [], {}, {}, {}
    for pair_id, result, error in results:
        if error is not None:
            failures[pair_id] = error
            continue
        pair_records, pair_mappings, pair_stats = result
        records.extend(pair_records)
        mappings[pair_id] = pair_mappings
        stats[pair_id] = pair_stats

    csv_text = format_records_csv(records)
    # Summarise the persisted precision so re-running summarize on the CSV is exact.
    summary = summarize(parse_records_csv(csv_text), stats, failures)

    out = Path(output_dir or cfg.output_dir) if (output_dir or cfg.output_dir) else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "records.csv").write_text(csv_text)
        (out / "pair_stats.json").write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n")
        (out / "summary.json").write_text(summary.to_json())
        (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
        (out / "mappings").mkdir(exist_ok=True)
        for pair_id, per_method in mappings.items():
            for method, mapping in per_method.items():
                (out / "mappings" / f"{pair_id}_{method}.json").write_text(mapping.to_json() + "\n")
        (out / "networks").mkdir(exist_ok=True)
        for i, net in enumerate(networks):
            save_network(net, out / "networks" / f"net_{i:03d}.scnet")
    return summary
