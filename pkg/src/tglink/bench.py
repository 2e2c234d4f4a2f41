"""Wall-clock scaling checks for the scoring and update phases.

Cells time the pure scoring work (pair features, perceptron forward, sparse
overlap) while one knob varies — number of scored pairs m, recent-neighbor
count k_r, or walk-vector width k_s — and a log-log least-squares fit turns
the cell times into an observed scaling exponent per knob. Stores are built
once at the largest k_s and sliced down per cell so cell timings isolate the
scoring cost.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .nn import init_mlp, mlp_forward
from .scoring import recency_weight, structure_score, time_aware_representation
from .synthetic import SyntheticConfig, generate
from .tppr import TpprConfig, TpprStore, top_k_nodes


@dataclass(frozen=True)
class BenchPlan:
    nodes: int = 2000
    events: int = 100000
    seed: int = 0
    pairs: int = 4000
    m_grid: tuple[int, ...] = (2000, 4000, 8000, 16000)
    k_r_grid: tuple[int, ...] = (10, 20, 40, 80)
    k_s_grid: tuple[int, ...] = (10, 20, 40, 80)
    repeats: int = 3
    alpha: float = 0.5
    beta: float = 0.9
    recency_bias: float = 0.7

    def __post_init__(self):
        if not (self.m_grid or self.k_r_grid or self.k_s_grid):
            raise ValueError("empty benchmark plan: all grids are empty")
        if self.events < 1 or self.nodes < 2:
            raise ValueError("plan needs a non-trivial graph")


@dataclass
class BenchReport:
    update_events: int
    update_seconds: float
    cells: dict = field(default_factory=dict)
    exponents: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"update_events": self.update_events,
                "update_seconds": self.update_seconds,
                "cells": self.cells, "exponents": self.exponents}


def fit_scaling_exponent(xs, times) -> float:
    """Least-squares slope of log(time) against log(x)."""
    lx = np.log(np.asarray(xs, dtype=np.float64))
    lt = np.log(np.asarray(times, dtype=np.float64))
    lx = lx - lx.mean()
    return float((lx * (lt - lt.mean())).sum() / (lx * lx).sum())


def _median_time(fn, repeats: int) -> float:
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return float(np.median(samples))


def run_benchmark(plan: BenchPlan, progress=None) -> BenchReport:
    """Build the substrate stream once, then time the scoring cells."""
    k_s_max = max(plan.k_s_grid) if plan.k_s_grid else 20
    g = generate(SyntheticConfig(seed=plan.seed, nodes=plan.nodes,
                                 events=plan.events, recency_bias=plan.recency_bias))
    tppr = TpprConfig(alpha=plan.alpha, beta=plan.beta, k_s=k_s_max, update_rule="scan")
    store = TpprStore(g, tppr)
    t0 = time.perf_counter()
    store.update_range(0, g.num_events)
    update_seconds = time.perf_counter() - t0
    report = BenchReport(g.num_events, update_seconds)

    rng = np.random.default_rng([plan.seed, 6])  # stream 6: benchmark pairs
    max_m = max(plan.m_grid) if plan.m_grid else plan.pairs
    pool = np.arange(plan.nodes)
    pairs = rng.choice(pool, size=(max_m, 2), replace=True)
    t_end = g.last_timestamp
    end_seq = g.num_events

    params = init_mlp(2 * (g.d_x + g.d_e), 64, 1, plan.seed)

    def hybrid_cell(m: int, k_r: int, entries_by_node) -> float:
        # no representation cache here: cells must expose the raw k_r cost
        scale = g.mean_inter_event_gap()

        def run():
            for v, u in pairs[:m]:
                h = np.concatenate([
                    time_aware_representation(g, v, t_end, k_r, before_seq=end_seq),
                    time_aware_representation(g, u, t_end, k_r, before_seq=end_seq),
                ])
                s_ta = float(mlp_forward(params, h, head="sigmoid")[0])
                s_sa = structure_score(entries_by_node[v], entries_by_node[u])
                w = recency_weight(g.mean_recency_interval(v, t_end, k_r, end_seq),
                                   g.mean_recency_interval(u, t_end, k_r, end_seq),
                                   scale)
                _ = w * s_ta + s_sa
        return _median_time(run, plan.repeats)

    def sliced_entries(k_s: int) -> list[dict[int, float]]:
        out = []
        for v in range(plan.nodes):
            ranked = top_k_nodes(store.get(v))[:k_s]
            out.append(dict(ranked))
        return out

    full_entries = sliced_entries(k_s_max)

    if plan.m_grid:
        times = []
        for m in plan.m_grid:
            cell = hybrid_cell(m, min(plan.k_r_grid) if plan.k_r_grid else 10, full_entries)
            times.append(cell)
            report.cells[f"m={m}"] = cell
            if progress:
                progress(f"m={m}: {cell:.3f}s")
        report.exponents["m"] = fit_scaling_exponent(plan.m_grid, times)

    if plan.k_r_grid:
        times = []
        for k_r in plan.k_r_grid:
            cell = hybrid_cell(plan.pairs, k_r, full_entries)
            times.append(cell)
            report.cells[f"k_r={k_r}"] = cell
            if progress:
                progress(f"k_r={k_r}: {cell:.3f}s")
        report.exponents["k_r"] = fit_scaling_exponent(plan.k_r_grid, times)

    if plan.k_s_grid:
        times = []
        for k_s in plan.k_s_grid:
            entries = sliced_entries(k_s)

            def run():
                for v, u in pairs[: plan.pairs]:
                    structure_score(entries[v], entries[u])
            cell = _median_time(run, plan.repeats)
            times.append(cell)
            report.cells[f"k_s={k_s}"] = cell
            if progress:
                progress(f"k_s={k_s}: {cell:.3f}s")
        report.exponents["k_s"] = fit_scaling_exponent(plan.k_s_grid, times)

    return report
