"""Command-line entry point: ``densegraph {stats,train,generate,evaluate,ablate}``."""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np
import torch

from .checkpoint import CheckpointError, generate_corpus, load_checkpoint
from .datasets import (DatasetParseError, compute_class_statistics, load_tudataset,
                       pooled_statistics, save_tudataset)
from .evaluation import DEFAULT_WEIGHTS, check_weights, evaluate, write_report
from .generator import generate_random_baseline, num_selected_edges
from .graph import GraphValidationError
from .training import ConfigError, TrainConfig, TrainingDivergedError, load_config, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_CONFIG = 4
EXIT_DIVERGED = 5
EXIT_CHECKPOINT = 6

GENERATED_NAME = "GENERATED"
BASELINE_NAME = "BASELINE"

log = logging.getLogger("densegraph")


def _threads():
    raw = os.environ.get("DENSEGRAPH_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"DENSEGRAPH_THREADS must be an integer, got {raw!r}") from None
    if n > 0:
        torch.set_num_threads(n)


STATS_COLUMNS = ["class", "original_label", "count", "mu_n", "sigma_n", "n_min", "n_max",
                 "mu_m", "rho"]


def cmd_stats(args) -> int:
    ds = load_tudataset(args.root, args.name)
    inv = {v: k for k, v in ds.label_mapping.items()}
    rows = []
    for s in compute_class_statistics(ds):
        rows.append([s.label, inv[s.label], s.count, s.mu_n, s.sigma_n, s.n_min, s.n_max,
                     s.mu_m, s.rho])
    p = pooled_statistics(ds)
    rows.append(["all", "", p.count, p.mu_n, p.sigma_n, p.n_min, p.n_max, p.mu_m, p.rho])
    print(f"{ds.name}: {len(ds)} graphs, {ds.num_classes} classes, feature_dim {ds.feature_dim}")
    print("  ".join(f"{c:>8}" for c in STATS_COLUMNS))
    for r in rows:
        print("  ".join(f"{v:>8.4f}" if isinstance(v, float) else f"{v!s:>8}" for v in r))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "class_stats.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(STATS_COLUMNS)
            w.writerows([[repr(v) if isinstance(v, float) else v for v in r] for r in rows])
    return EXIT_OK


def cmd_train(args) -> int:
    ds = load_tudataset(args.root, args.name)
    config = load_config(args.config, ds.name) if args.config else TrainConfig.for_dataset(ds.name)
    if args.seed is not None:
        config = TrainConfig.from_dict({"seed": args.seed}, config)
    if args.epochs is not None:
        config = TrainConfig.from_dict({"epochs": args.epochs}, config)
    try:
        result = train(ds, config, out_dir=args.out)
    except TrainingDivergedError as exc:
        print(f"training diverged: {exc}; diagnostic checkpoint: {exc.checkpoint_path}",
              file=sys.stderr)
        return EXIT_DIVERGED
    print(f"trained {result.final.epoch} epochs; checkpoint {Path(args.out) / 'final.dgck'}")
    return EXIT_OK


def cmd_generate(args) -> int:
    ck = load_checkpoint(args.checkpoint)
    graphs = generate_corpus(ck, args.count_per_class, args.seed)
    _check_density(graphs, ck.class_stats)
    d = save_tudataset(graphs, args.out, GENERATED_NAME, ck.inverse_label_mapping)
    _write_label_sidecar(d, ck.label_mapping)
    print(f"wrote {len(graphs)} graphs to {d}")
    return EXIT_OK


def _check_density(graphs, stats):
    for g in graphs:
        st = stats[g.label]
        if g.num_edges != num_selected_edges(st.rho, g.n) or not st.n_min <= g.n <= st.n_max:
            raise GraphValidationError(f"generated graph violates class density/size: {g!r}")


def _write_label_sidecar(d: Path, label_mapping: dict):
    with open(d / "label_mapping.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["original_label", "class"])
        w.writerows(sorted(label_mapping.items(), key=lambda kv: kv[1]))


def _weights(args):
    return check_weights((args.alpha, args.beta, args.gamma))


def cmd_evaluate(args) -> int:
    weights = _weights(args)
    real = load_tudataset(args.root, args.name)
    gen_root, gen_name = _generated_location(args.generated)
    generated = load_tudataset(gen_root, gen_name, label_mapping=real.label_mapping)
    report = evaluate(real, generated.graphs, weights)
    write_report(report, args.out, {v: k for k, v in real.label_mapping.items()})
    _print_report(report)
    for c in report.classes:
        if c.missing:
            print(f"class {c.label}: no generated graphs (reported as missing)", file=sys.stderr)
    return EXIT_OK


def _generated_location(path):
    """Accept either a TUDataset directory or its parent holding ``GENERATED/``."""
    p = Path(path)
    if (p / GENERATED_NAME / f"{GENERATED_NAME}_A.txt").exists():
        return p, GENERATED_NAME
    hits = sorted(p.glob("*_graph_indicator.txt"))
    if len(hits) == 1:
        return p, hits[0].name[: -len("_graph_indicator.txt")]
    raise DatasetParseError("no TUDataset corpus found", p)


def cmd_ablate(args) -> int:
    weights = _weights(args)
    real = load_tudataset(args.root, args.name)
    ck = load_checkpoint(args.checkpoint)
    learned = generate_corpus(ck, args.count_per_class, args.seed)
    rng = np.random.default_rng(args.seed)
    baseline = [generate_random_baseline(ck.class_stats, c, rng, cf=ck.config.cf,
                                         feature_dim=real.feature_dim)
                for c in range(real.num_classes) for _ in range(args.count_per_class)]
    out = Path(args.out)
    inv = {v: k for k, v in real.label_mapping.items()}
    rep_l = evaluate(real, learned, weights)
    rep_b = evaluate(real, baseline, weights)
    write_report(rep_l, out / "learned", inv)
    write_report(rep_b, out / "baseline", inv)
    write_comparison(rep_l, rep_b, out / "comparison.csv")
    print("class  combined_learned  combined_baseline  delta")
    for a, b in zip(rep_l.classes, rep_b.classes):
        print(f"{a.label:>5}  {a.mmd_combined:16.4f}  {b.mmd_combined:17.4f}  "
              f"{a.mmd_combined - b.mmd_combined:+.4f}")
    return EXIT_OK


COMPARISON_COLUMNS = [
    "class", "num_learned", "num_baseline",
    "mmd_degree_learned", "mmd_degree_baseline",
    "mmd_clustering_learned", "mmd_clustering_baseline",
    "mmd_spectral_learned", "mmd_spectral_baseline",
    "mmd_combined_learned", "mmd_combined_baseline", "mmd_combined_delta",
    "avg_edges_learned", "avg_edges_baseline",
]


def write_comparison(rep_l, rep_b, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPARISON_COLUMNS)
        for a, b in zip(rep_l.classes, rep_b.classes):
            w.writerow([a.label, a.num_gen, b.num_gen,
                        repr(a.mmd_degree), repr(b.mmd_degree),
                        repr(a.mmd_clustering), repr(b.mmd_clustering),
                        repr(a.mmd_spectral), repr(b.mmd_spectral),
                        repr(a.mmd_combined), repr(b.mmd_combined),
                        repr(a.mmd_combined - b.mmd_combined),
                        repr(a.avg_edges_gen), repr(b.avg_edges_gen)])


def _print_report(report):
    print(f"{'class':>5} {'deg':>7} {'clu':>7} {'spec':>7} {'comb':>7} "
          f"{'nodes r->g':>14} {'edges r->g':>14} {'uniq':>6} {'nov':>6}")
    for c in report.classes:
        print(f"{c.label:>5} {c.mmd_degree:7.4f} {c.mmd_clustering:7.4f} {c.mmd_spectral:7.4f} "
              f"{c.mmd_combined:7.4f} {c.avg_nodes_real:6.1f}->{c.avg_nodes_gen:<6.1f} "
              f"{c.avg_edges_real:6.1f}->{c.avg_edges_gen:<6.1f} "
              f"{c.uniqueness:6.3f} {c.novelty:6.3f}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="densegraph", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("stats", help="per-class dataset statistics")
    s.add_argument("--root", required=True)
    s.add_argument("--name", required=True)
    s.add_argument("--out", help="directory for class_stats.csv")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("train", help="train a generator/critic pair")
    s.add_argument("--root", required=True)
    s.add_argument("--name", required=True)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--epochs", type=int)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("generate", help="sample graphs from a checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--count-per-class", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_generate)

    for name, func, help_ in (("evaluate", cmd_evaluate, "compare a generated corpus to real data"),
                              ("ablate", cmd_ablate, "learned model vs fixed-probability edges")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--root", required=True)
        s.add_argument("--name", required=True)
        s.add_argument("--out", required=True)
        if name == "evaluate":
            s.add_argument("--generated", required=True)
        else:
            s.add_argument("--checkpoint", required=True)
            s.add_argument("--count-per-class", type=int, required=True)
            s.add_argument("--seed", type=int, default=0)
        s.add_argument("--alpha", type=float, default=DEFAULT_WEIGHTS[0])
        s.add_argument("--beta", type=float, default=DEFAULT_WEIGHTS[1])
        s.add_argument("--gamma", type=float, default=DEFAULT_WEIGHTS[2])
        s.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _threads()
        return args.func(args)
    except (DatasetParseError, GraphValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
