"""Command line entry point: ``safecross {train,align,sweep,experiment,summarize}``.

Failures exit non-zero and print one JSON object ``{"error": ..., "message": ...}``
to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .crossover import METHOD_STRATEGY, METHODS, align_pair, sweep
from .datasets import split
from .harness import (
    ConfigError,
    ExperimentConfig,
    _seeds,
    format_records_csv,
    load_config,
    load_dataset,
    parse_records_csv,
    run_experiment,
    summarize,
    train_population,
)
from .mlp import load_network, save_network


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = args.workers
    return replace(cfg, **overrides) if overrides else cfg


def _splits(cfg: ExperimentConfig):
    data = load_dataset(cfg.dataset)
    split_seed, probe_seed, _ = _seeds(cfg.seed, 3)
    parts = split(data, split_seed)
    n_probe = min(cfg.n_probe, len(parts.train))
    probe = parts.train.inputs[np.random.default_rng(probe_seed).permutation(len(parts.train))[:n_probe]]
    return data, parts, probe


def cmd_train(args):
    cfg = _config(args)
    data, parts, _ = _splits(cfg)
    n_classes = int(cfg.dataset.get("classes") or data.labels.max() + 1)
    out = Path(args.out) / "networks"
    out.mkdir(parents=True, exist_ok=True)
    for i, net in enumerate(train_population(cfg, parts.train, n_classes)):
        save_network(net, out / f"net_{i:03d}.scnet")


def cmd_align(args):
    cfg = _config(args)
    _, _, probe = _splits(cfg)
    pair = align_pair(load_network(args.net_a), load_network(args.net_b), args.strategy, probe, cfg.cca,
                      direction=args.direction, literal_rows=args.literal_rows)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_network(pair.net_a_aligned, out / "aligned_a.scnet")
    save_network(pair.net_b_aligned, out / "aligned_b.scnet")
    (out / "mapping.json").write_text(pair.mapping.to_json() + "\n")


def cmd_sweep(args):
    cfg = _config(args)
    _, parts, probe = _splits(cfg)
    net_a, net_b = load_network(args.net_a), load_network(args.net_b)
    if args.method != "naive":
        pair = align_pair(net_a, net_b, METHOD_STRATEGY[args.method], probe, cfg.cca)
        net_a, net_b = pair.net_a_aligned, pair.net_b_aligned
    records = sweep(net_a, net_b, cfg.grid(), parts.validation, args.method, args.pair_id)
    Path(args.out).write_text(format_records_csv(records))


def cmd_experiment(args):
    cfg = _config(args)
    summary = run_experiment(cfg, output_dir=args.out)
    for method, w in summary.wins.items():
        print(f"{method}: safe beats naive at t=0.5 in {w['wins']}/{w['pairs']} pairs")


def cmd_summarize(args):
    records = parse_records_csv(Path(args.records).read_text())
    stats = json.loads(Path(args.pair_stats).read_text()) if args.pair_stats else None
    text = summarize(records, stats).to_json()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="safecross", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_help):
        p.add_argument("--config", help="experiment config JSON")
        p.add_argument("--out", required=True, help=out_help)
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--workers", type=int, help="parallel workers")

    p = sub.add_parser("train", help="train the network population")
    common(p, "output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("align", help="functionally align two saved networks")
    common(p, "output directory")
    p.add_argument("--net-a", required=True)
    p.add_argument("--net-b", required=True)
    p.add_argument("--strategy", choices=("cca", "semi_match", "bipartite"), default="bipartite")
    p.add_argument("--direction", choices=("a_to_b", "b_to_a"), default="a_to_b")
    p.add_argument("--literal-rows", action="store_true",
                   help="reorder network b's outgoing rows with network a's list")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("sweep", help="interpolation sweep between two saved networks")
    common(p, "output CSV path")
    p.add_argument("--net-a", required=True)
    p.add_argument("--net-b", required=True)
    p.add_argument("--method", choices=METHODS, default="naive")
    p.add_argument("--pair-id", default="000")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("experiment", help="full train/pair/align/sweep run")
    common(p, "output directory")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("summarize", help="recompute summary.json from records.csv")
    p.add_argument("--records", required=True)
    p.add_argument("--pair-stats")
    p.add_argument("--out")
    p.set_defaults(func=cmd_summarize)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        args.func(args)
    except Exception as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 2 if isinstance(exc, ConfigError) else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
