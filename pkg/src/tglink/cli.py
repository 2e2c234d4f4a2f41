"""Command-line front end.

Subcommands: convert, train, eval, sweep, motiv, bench. Runs are driven by a
JSON manifest (see pipeline.RunManifest) with flags acting as overrides, so a
sweep or CI run is fully described by one file plus its seeds.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bench import BenchPlan
from .io import FORMATS, convert
from .pipeline import RunManifest, run_bench, run_motiv, run_sweep, run_train_eval


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x)


def _add_manifest_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--manifest", help="JSON run manifest; flags override its fields")
    p.add_argument("--dataset", help="dataset path")
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--bipartite", type=int, choices=(0, 1))
    p.add_argument("--role-pool", choices=("destination", "any"))
    p.add_argument("--k-r", type=int)
    p.add_argument("--k-s", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    lam = p.add_mutually_exclusive_group()
    lam.add_argument("--lambda", dest="lam", type=float)
    lam.add_argument("--tune-lambda", action="store_true")
    p.add_argument("--update-rule", choices=("iterate", "scan"))
    p.add_argument("--neg-test", type=int, help="test negatives per edge (default 99)")
    p.add_argument("--patience", type=int)
    p.add_argument("--epochs-max", type=int)
    p.add_argument("--split", type=_floats, help="e.g. 0.70,0.15,0.15")
    p.add_argument("--seed", type=_ints, help="comma-separated seed list")
    p.add_argument("--out", help="output directory")


def _manifest_from_args(args: argparse.Namespace) -> RunManifest:
    overrides: dict = {}
    mapping = {
        "dataset": "dataset", "format": "format", "role_pool": "role_pool",
        "k_r": "k_r", "k_s": "k_s", "alpha": "alpha", "beta": "beta",
        "lam": "lam", "update_rule": "update_rule",
        "neg_test": "num_test_negatives", "patience": "patience",
        "epochs_max": "epochs_max", "split": "split", "seed": "seeds",
        "out": "out_dir",
    }
    for attr, key in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "bipartite", None) is not None:
        overrides["bipartite"] = bool(args.bipartite)
    if getattr(args, "tune_lambda", False):
        overrides["lam"] = None
    if args.manifest:
        return RunManifest.from_json(args.manifest, overrides)
    if "dataset" not in overrides:
        raise SystemExit("either --manifest or --dataset is required")
    return RunManifest.from_dict(overrides)


def _echo(line: str) -> None:
    print(line, flush=True)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="tglink",
                                     description="streaming temporal-graph link prediction")
    sub = parser.add_subparsers(dest="command", required=True)

    p_convert = sub.add_parser("convert", help="normalize a dataset to the canonical format")
    p_convert.add_argument("--input", required=True)
    p_convert.add_argument("--format", required=True, choices=FORMATS)
    p_convert.add_argument("--output", required=True)

    p_train = sub.add_parser("train", help="train the time-aware scorer")
    _add_manifest_flags(p_train)

    p_eval = sub.add_parser("eval", help="train if needed, then evaluate scorers")
    _add_manifest_flags(p_eval)
    p_eval.add_argument("--scorer", default="hybrid",
                        help="comma-separated subset of time,struct,hybrid")
    p_eval.add_argument("--no-train", action="store_true",
                        help="fail instead of training when a checkpoint is missing")

    p_sweep = sub.add_parser("sweep", help="Cartesian hyperparameter sweep to CSV")
    _add_manifest_flags(p_sweep)
    p_sweep.add_argument("--scorer", default="hybrid", choices=("time", "struct", "hybrid"))
    p_sweep.add_argument("--k-r-grid", type=_ints, default=(10,))
    p_sweep.add_argument("--k-s-grid", type=_ints, default=(20,))
    p_sweep.add_argument("--alpha-grid", type=_floats, default=(0.5,))
    p_sweep.add_argument("--beta-grid", type=_floats, default=(0.9,))
    p_sweep.add_argument("--lambda-grid", type=_floats, default=(0.0, 0.5, 1.0))

    p_motiv = sub.add_parser("motiv", help="compare neighbor-selection strategies")
    _add_manifest_flags(p_motiv)
    p_motiv.add_argument("--strategies", default="recent,old,uniform")
    p_motiv.add_argument("--k-grid", type=_ints, default=(10,))

    p_bench = sub.add_parser("bench", help="scaling benchmark for update and scoring")
    p_bench.add_argument("--plan", help="JSON bench plan")
    p_bench.add_argument("--nodes", type=int)
    p_bench.add_argument("--events", type=int)
    p_bench.add_argument("--pairs", type=int)
    p_bench.add_argument("--m-grid", type=_ints)
    p_bench.add_argument("--k-r-grid", type=_ints)
    p_bench.add_argument("--k-s-grid", type=_ints)
    p_bench.add_argument("--seed", type=int)
    p_bench.add_argument("--out", default="runs")

    args = parser.parse_args(argv)

    if args.command == "convert":
        n = convert(args.input, args.format, args.output)
        _echo(f"wrote {n} events to {args.output}")
        return 0

    if args.command == "train":
        manifest = _manifest_from_args(args)
        from .pipeline import load_dataset, run_train
        g, split = load_dataset(manifest)
        for seed in manifest.seeds:
            _, t_train, ckpt = run_train(manifest, seed, g, split)
            _echo(f"seed {seed}: checkpoint {ckpt} ({t_train:.1f}s)")
        return 0

    if args.command == "eval":
        manifest = _manifest_from_args(args)
        scorers = tuple(s for s in args.scorer.split(",") if s)
        if args.no_train:
            from .pipeline import load_dataset, run_eval
            g, split = load_dataset(manifest)
            for seed in manifest.seeds:
                for scorer in scorers:
                    report = run_eval(manifest, scorer, seed, g, split)
                    _echo(f"seed {seed} {scorer}: mrr={report.mrr:.4f} "
                          f"ap={report.ap:.4f}")
            return 0
        results = run_train_eval(manifest, scorers, progress=_echo)
        for scorer, agg in results["aggregate"].items():
            _echo(f"{scorer}: mrr {agg['mrr']['mean']:.4f}±{agg['mrr']['std']:.4f} "
                  f"ap {agg['ap']['mean']:.4f}±{agg['ap']['std']:.4f}")
        return 0

    if args.command == "sweep":
        manifest = _manifest_from_args(args)
        rows = run_sweep(manifest, args.k_r_grid, args.k_s_grid, args.alpha_grid,
                         args.beta_grid, args.lambda_grid, scorer=args.scorer,
                         progress=_echo)
        _echo(f"{len(rows) - 1} sweep rows -> {Path(manifest.out_dir) / ('sweep_' + args.scorer + '.csv')}")
        return 0

    if args.command == "motiv":
        manifest = _manifest_from_args(args)
        strategies = tuple(s for s in args.strategies.split(",") if s)
        rows = run_motiv(manifest, strategies, args.k_grid, progress=_echo)
        _echo(f"{len(rows) - 1} rows -> {Path(manifest.out_dir) / 'motiv.csv'}")
        return 0

    if args.command == "bench":
        payload = {}
        if args.plan:
            with open(args.plan) as fh:
                payload = json.load(fh)
        for key in ("nodes", "events", "pairs", "seed"):
            value = getattr(args, key)
            if value is not None:
                payload[key] = value
        for key in ("m_grid", "k_r_grid", "k_s_grid"):
            value = getattr(args, key)
            if value is not None:
                payload[key] = tuple(value)
        plan = BenchPlan(**payload)
        report = run_bench(plan, out_dir=args.out, progress=_echo)
        for knob, exponent in report.exponents.items():
            _echo(f"scaling exponent in {knob}: {exponent:.2f}")
        return 0

    return 1


if __name__ == "__main__":
    sys.exit(main())
