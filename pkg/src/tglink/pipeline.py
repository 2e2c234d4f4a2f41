"""Manifest-driven runs: train, evaluate, sweep, strategy comparison, bench.

A run manifest is one JSON object naming the dataset, the scorer knobs, the
training and evaluation protocols, and the seeds. Every command is
reproducible from its manifest: all randomness flows from named seed streams
derived from the manifest seeds, and commands never mutate input datasets.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .bench import BenchPlan, BenchReport, run_benchmark
from .evaluation import (CSV_HEADER, EvalConfig, EvalReport, _Phase,
                         _reduce, _stream_groups, aggregate_reports, evaluate,
                         prepare_store)
from .graph import ROLE_ANY, ROLE_DESTINATION, DatasetSplit, TemporalGraph
from .io import load_events
from .nn import MlpParams, load_checkpoint, save_checkpoint
from .scoring import LAMBDA_GRID, RepCache, ScoringConfig, tune_lambda
from .tppr import TpprConfig, TpprStore
from .training import TrainConfig, train_time_model


@dataclass(frozen=True)
class RunManifest:
    dataset: str
    format: str = "jodie-csv"
    bipartite: bool | None = None
    role_pool: str = ROLE_DESTINATION
    d_e: int | None = None
    split: tuple[float, float, float] = (0.70, 0.15, 0.15)
    out_dir: str = "runs"
    seeds: tuple[int, ...] = (0,)
    # scorer knobs
    k_r: int = 10
    k_s: int = 20
    alpha: float = 0.5
    beta: float = 0.9
    lam: float | None = None          # None: tune on validation
    time_scale: float | None = None   # None: training-split mean gap
    include_self: bool = True
    update_rule: str = "scan"         # streaming default; "iterate" for oracle-exact
    neighbor_strategy: str = "recent"
    lambda_grid: tuple[float, ...] = LAMBDA_GRID
    # training protocol
    epochs_max: int = 50
    patience: int = 5
    batch_size: int = 200
    learning_rate: float = 1e-3
    train_negatives_per_positive: int = 1
    d_hidden: int = 128
    # evaluation protocol
    num_test_negatives: int = 99
    hr_cutoffs: tuple[int, ...] = (10, 20, 30, 40, 50)
    ap_mode: str = "pooled"

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("seeds must be non-empty")
        if self.role_pool not in (ROLE_DESTINATION, ROLE_ANY):
            raise ValueError(f"unknown role_pool {self.role_pool!r}")

    @classmethod
    def from_json(cls, path: str | Path, overrides: dict | None = None) -> "RunManifest":
        with open(path) as fh:
            payload = json.load(fh)
        payload.update(overrides or {})
        return cls.from_dict(payload)

    @classmethod
    def from_dict(cls, payload: dict) -> "RunManifest":
        known = set(cls.__dataclass_fields__)
        unknown = set(payload) - known
        if unknown:
            raise ValueError(f"unknown manifest keys: {sorted(unknown)}")
        for key in ("seeds", "split", "hr_cutoffs", "lambda_grid"):
            if key in payload and isinstance(payload[key], list):
                payload[key] = tuple(payload[key])
        return cls(**payload)

    def to_dict(self) -> dict:
        out = {}
        for name in self.__dataclass_fields__:
            value = getattr(self, name)
            out[name] = list(value) if isinstance(value, tuple) else value
        return out

    # -- derived configs ------------------------------------------------

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(epochs_max=self.epochs_max, patience=self.patience,
                           batch_size=self.batch_size, learning_rate=self.learning_rate,
                           train_negatives_per_positive=self.train_negatives_per_positive,
                           seed=seed, d_hidden=self.d_hidden, role=self.role_pool)

    def eval_config(self, seed: int) -> EvalConfig:
        return EvalConfig(num_test_negatives=self.num_test_negatives,
                          hr_cutoffs=self.hr_cutoffs, seed=seed,
                          ap_mode=self.ap_mode, role=self.role_pool)

    def scoring_config(self, g: TemporalGraph, split: DatasetSplit) -> ScoringConfig:
        scale = self.time_scale
        if scale is None:
            scale = g.mean_inter_event_gap(0, split.train_end_seq)
        tppr = TpprConfig(alpha=self.alpha, beta=self.beta, k_s=self.k_s,
                          include_self=self.include_self, update_rule=self.update_rule)
        return ScoringConfig(k_r=self.k_r, k_s=self.k_s,
                             lam=self.lam if self.lam is not None else 1.0,
                             time_scale=scale, tppr=tppr,
                             neighbor_strategy=self.neighbor_strategy)


def load_dataset(manifest: RunManifest) -> tuple[TemporalGraph, DatasetSplit]:
    g = load_events(manifest.dataset, manifest.format, d_e=manifest.d_e,
                    bipartite=manifest.bipartite)
    return g, g.split(manifest.split)


def _seed_dir(manifest: RunManifest, seed: int) -> Path:
    path = Path(manifest.out_dir) / f"seed{seed}"
    path.mkdir(parents=True, exist_ok=True)
    return path


def checkpoint_path(manifest: RunManifest, seed: int, k_r: int | None = None,
                    strategy: str | None = None) -> Path:
    k_r = manifest.k_r if k_r is None else k_r
    strategy = manifest.neighbor_strategy if strategy is None else strategy
    return _seed_dir(manifest, seed) / f"model_kr{k_r}_{strategy}.ckpt"


# ----------------------------------------------------------------------
# commands

def run_train(manifest: RunManifest, seed: int,
              g: TemporalGraph | None = None, split: DatasetSplit | None = None
              ) -> tuple[MlpParams, float, Path]:
    """Train the time scorer for one seed; writes checkpoint + epoch log."""
    if g is None:
        g, split = load_dataset(manifest)
    scoring = manifest.scoring_config(g, split)
    t0 = time.perf_counter()
    params, logs = train_time_model(g, split, manifest.train_config(seed), scoring)
    t_train = time.perf_counter() - t0
    ckpt = checkpoint_path(manifest, seed)
    save_checkpoint(params, ckpt, seed=seed)
    with open(_seed_dir(manifest, seed) / "train_log.jsonl", "w") as fh:
        for entry in logs:
            fh.write(json.dumps(entry.to_dict()) + "\n")
    return params, t_train, ckpt


def run_eval(manifest: RunManifest, scorer: str, seed: int,
             g: TemporalGraph | None = None, split: DatasetSplit | None = None,
             params: MlpParams | None = None, t_train_s: float = 0.0,
             store: TpprStore | None = None) -> EvalReport:
    """Evaluate one scorer for one seed; writes the report JSON."""
    if g is None:
        g, split = load_dataset(manifest)
    scoring = manifest.scoring_config(g, split)
    if scorer in ("time", "hybrid") and params is None:
        ckpt = checkpoint_path(manifest, seed)
        if not ckpt.exists():
            raise FileNotFoundError(
                f"scorer {scorer!r} needs the trained checkpoint {ckpt}; run train first"
            )
        params = load_checkpoint(ckpt)
    tune = scorer == "hybrid" and manifest.lam is None
    report = evaluate(g, split, scorer, manifest.eval_config(seed), scoring,
                      params=params, store=store, t_train_s=t_train_s,
                      tune_on_validation=tune, lambda_grid=manifest.lambda_grid)
    out = _seed_dir(manifest, seed) / f"report_{scorer}.json"
    with open(out, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
    return report


def run_train_eval(manifest: RunManifest, scorers: tuple[str, ...] = ("hybrid",),
                   progress=None) -> dict:
    """Per-seed train + eval for the selected scorer variants, plus mean/std
    aggregates; the struct scorer is training-free and skips training."""
    g, split = load_dataset(manifest)
    needs_model = any(s in ("time", "hybrid") for s in scorers)
    results: dict = {"manifest": manifest.to_dict(), "per_seed": {}, "aggregate": {}}
    reports_by_scorer: dict[str, list[EvalReport]] = {s: [] for s in scorers}
    for seed in manifest.seeds:
        params, t_train = None, 0.0
        if needs_model:
            params, t_train, _ = run_train(manifest, seed, g, split)
            if progress:
                progress(f"seed {seed}: trained in {t_train:.1f}s")
        seed_block = {}
        for scorer in scorers:
            report = run_eval(manifest, scorer, seed, g, split,
                              params=params, t_train_s=t_train)
            reports_by_scorer[scorer].append(report)
            seed_block[scorer] = report.to_dict()
            if progress:
                progress(f"seed {seed} {scorer}: mrr={report.mrr:.4f} ap={report.ap:.4f}")
        results["per_seed"][str(seed)] = seed_block
    for scorer, reports in reports_by_scorer.items():
        results["aggregate"][scorer] = aggregate_reports(reports)
    out_dir = Path(manifest.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(results, fh, indent=2, sort_keys=True)
    return results


# ----------------------------------------------------------------------
# sweep with artifact reuse

def run_sweep(manifest: RunManifest, k_r_grid: tuple[int, ...],
              k_s_grid: tuple[int, ...], alpha_grid: tuple[float, ...],
              beta_grid: tuple[float, ...], lambda_values: tuple[float, ...],
              scorer: str = "hybrid", progress=None) -> list[str]:
    """Cartesian sweep emitting one CSV row per cell.

    Checkpoints are trained once per (k_r, seed) and walk stores are built
    once per (alpha, beta, k_s); lambda cells reuse the per-candidate score
    components, so only the final reduction differs across lambda.
    """
    if not (k_r_grid and k_s_grid and alpha_grid and beta_grid):
        raise ValueError("sweep grids must be non-empty")
    if scorer != "struct" and not lambda_values:
        raise ValueError("lambda grid must be non-empty for time/hybrid sweeps")
    g, split = load_dataset(manifest)
    rows = [CSV_HEADER]
    dataset_name = Path(manifest.dataset).stem
    for seed in manifest.seeds:
        ckpt_cache: dict[int, tuple[MlpParams, float]] = {}
        for k_r in k_r_grid:
            if scorer in ("time", "hybrid") and k_r not in ckpt_cache:
                sub = replace(manifest, k_r=k_r)
                params, t_train, _ = run_train(sub, seed, g, split)
                ckpt_cache[k_r] = (params, t_train)
                if progress:
                    progress(f"seed {seed} k_r={k_r}: trained in {t_train:.1f}s")
            params, t_train = ckpt_cache.get(k_r, (None, 0.0))
            for alpha in alpha_grid:
                for beta in beta_grid:
                    for k_s in k_s_grid:
                        sub = replace(manifest, k_r=k_r, k_s=k_s, alpha=alpha,
                                      beta=beta, lam=lambda_values[0] if lambda_values else 0.0)
                        scoring = sub.scoring_config(g, split)
                        eval_cfg = sub.eval_config(seed)
                        groups, phase = _collect_test_components(
                            g, split, scorer, eval_cfg, scoring, params)
                        lams = lambda_values if scorer == "hybrid" else (scoring.lam,)
                        for lam in lams:
                            ap, mrr_val, hr, _ = _reduce(groups, scorer, lam, eval_cfg)
                            report = EvalReport(
                                scorer=scorer, ap=ap, mrr=mrr_val, hr=hr,
                                n_edges=len(groups), t_train_s=t_train,
                                t_update_s=phase.update, t_infer_s=phase.infer,
                                config={"k_r": k_r, "k_s": k_s, "alpha": alpha,
                                        "beta": beta, "lam": lam, "seed": seed},
                            )
                            rows.append(report.csv_row(dataset_name))
                            if progress:
                                progress(f"seed {seed} k_r={k_r} k_s={k_s} a={alpha} "
                                         f"b={beta} lam={lam}: mrr={mrr_val:.4f}")
    out_dir = Path(manifest.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"sweep_{scorer}.csv").write_text("\n".join(rows) + "\n")
    return rows


def _collect_test_components(g, split, scorer, eval_cfg, scoring, params):
    """Stream the test split once, returning per-candidate components."""
    phase = _Phase()
    store = None
    if scorer in ("struct", "hybrid"):
        store = prepare_store(g, scoring, split.valid_end_seq, phase)
    cache = (RepCache(g, scoring.k_r, scoring.neighbor_strategy, scoring.divide_by_k_r)
             if scorer in ("time", "hybrid") else None)
    groups = _stream_groups(g, split.test_range, scorer, eval_cfg, scoring,
                            params, store, cache, phase, store is not None)
    return groups, phase


# ----------------------------------------------------------------------
# neighbor-selection comparison

MOTIV_HEADER = "dataset,strategy,k_r,seed,ap,mrr,hr10"


def run_motiv(manifest: RunManifest,
              strategies: tuple[str, ...] = ("recent", "old", "uniform"),
              k_grid: tuple[int, ...] = (10,), progress=None) -> list[str]:
    """Train/evaluate the time scorer under each neighbor-selection strategy."""
    if not strategies or not k_grid:
        raise ValueError("strategies and k_grid must be non-empty")
    g, split = load_dataset(manifest)
    rows = [MOTIV_HEADER]
    dataset_name = Path(manifest.dataset).stem
    for strategy in strategies:
        for k_r in k_grid:
            sub = replace(manifest, k_r=k_r, neighbor_strategy=strategy)
            for seed in manifest.seeds:
                scoring = sub.scoring_config(g, split)
                t0 = time.perf_counter()
                params, _ = train_time_model(g, split, sub.train_config(seed), scoring)
                t_train = time.perf_counter() - t0
                report = evaluate(g, split, "time", sub.eval_config(seed), scoring,
                                  params=params, t_train_s=t_train)
                hr10 = report.hr.get(10, 0.0)
                rows.append(f"{dataset_name},{strategy},{k_r},{seed},"
                            f"{report.ap!r},{report.mrr!r},{hr10!r}")
                if progress:
                    progress(f"{strategy} k_r={k_r} seed={seed}: "
                             f"ap={report.ap:.4f} mrr={report.mrr:.4f}")
    out_dir = Path(manifest.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "motiv.csv").write_text("\n".join(rows) + "\n")
    return rows


def run_bench(plan: BenchPlan, out_dir: str | Path = "runs", progress=None) -> BenchReport:
    report = run_benchmark(plan, progress=progress)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "bench.json", "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
    return report
