"""Ranking evaluation under the sampled-negatives protocol.

Each test event is scored against its true destination plus `num_test_negatives`
sampled impostors (99 by default, ranking the positive among 100). Events are
streamed in order and folded into the graph frontier and walk store right
after being scored, so later predictions see earlier test events but never
their own future. Ties rank pessimistically: a negative scoring exactly the
positive's score counts as ranked above it.

Average precision is pooled-global: positives and negatives from all test
events are ranked together. Per-edge AP (which collapses to reciprocal rank
with a single positive) is available behind `ap_mode="per-edge"`.
"""

from __future__ import annotations

import math
import resource
import time
from dataclasses import dataclass, field

import numpy as np

from .graph import ROLE_DESTINATION, DatasetSplit, TemporalGraph
from .nn import MlpParams, mlp_forward
from .scoring import (CandidateScores, LAMBDA_GRID, RepCache, ScoringConfig,
                      recency_weight, structure_score, tune_lambda)
from .tppr import TpprStore

SCORERS = ("time", "struct", "hybrid")

CSV_HEADER = ("dataset,scorer,k_r,k_s,alpha,beta,lambda,ap,mrr,"
              "hr10,hr20,hr30,hr40,hr50,t_train_s,t_infer_s,peak_mem_b")


@dataclass(frozen=True)
class EvalConfig:
    num_test_negatives: int = 99
    hr_cutoffs: tuple[int, ...] = (10, 20, 30, 40, 50)
    seed: int = 0
    ap_mode: str = "pooled"
    role: str = ROLE_DESTINATION

    def __post_init__(self):
        if self.num_test_negatives < 1:
            raise ValueError("num_test_negatives must be >= 1")
        if any(n < 1 or n > self.num_test_negatives + 1 for n in self.hr_cutoffs):
            raise ValueError("hr cutoffs must lie in [1, num_test_negatives + 1]")
        if self.ap_mode not in ("pooled", "per-edge"):
            raise ValueError("ap_mode must be 'pooled' or 'per-edge'")


@dataclass
class EvalReport:
    scorer: str
    ap: float
    mrr: float
    hr: dict[int, float]
    n_edges: int
    t_train_s: float = 0.0
    t_update_s: float = 0.0
    t_infer_s: float = 0.0
    t_tune_s: float = 0.0
    peak_memory_bytes: int = 0
    config: dict = field(default_factory=dict)

    def validate(self) -> None:
        cuts = sorted(self.hr)
        for a, b in zip(cuts, cuts[1:]):
            if self.hr[a] > self.hr[b] + 1e-12:
                raise AssertionError(f"HR@{a} > HR@{b}")
        if not all(0.0 <= x <= 1.0 for x in (self.ap, self.mrr, *self.hr.values())):
            raise AssertionError("metrics must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "scorer": self.scorer, "ap": self.ap, "mrr": self.mrr,
            "hr": {str(k): v for k, v in sorted(self.hr.items())},
            "n_edges": self.n_edges, "t_train_s": self.t_train_s,
            "t_update_s": self.t_update_s, "t_infer_s": self.t_infer_s,
            "t_tune_s": self.t_tune_s,
            "peak_memory_bytes": self.peak_memory_bytes, "config": self.config,
        }

    def csv_row(self, dataset: str) -> str:
        cfg = self.config
        hr_cols = [repr(self.hr[n]) if n in self.hr else "" for n in (10, 20, 30, 40, 50)]
        cols = [dataset, self.scorer,
                str(cfg.get("k_r", "")), str(cfg.get("k_s", "")),
                str(cfg.get("alpha", "")), str(cfg.get("beta", "")),
                str(cfg.get("lam", "")), repr(self.ap), repr(self.mrr),
                *hr_cols, repr(self.t_train_s), repr(self.t_infer_s),
                str(self.peak_memory_bytes)]
        return ",".join(cols)


# ----------------------------------------------------------------------
# metric primitives

def rank_positive(score_pos: float, scores_neg) -> int:
    """1 + negatives scoring strictly above + negatives tying (pessimistic)."""
    if not math.isfinite(score_pos) or not np.all(np.isfinite(scores_neg)):
        raise ValueError("scores must be finite")
    negs = np.asarray(scores_neg)
    return 1 + int(np.sum(negs > score_pos)) + int(np.sum(negs == score_pos))


def mrr(ranks) -> float:
    ranks = np.asarray(ranks, dtype=np.float64)
    if ranks.size == 0:
        raise ValueError("no ranks")
    return float(np.mean(1.0 / ranks))


def hit_ratio(ranks, n: int) -> float:
    ranks = np.asarray(ranks)
    if ranks.size == 0:
        raise ValueError("no ranks")
    return float(np.mean(ranks <= n))


def average_precision(pooled: list[tuple[float, bool]]) -> float:
    """Pooled AP over (score, is_positive) items with pessimistic ties.

    Items are ranked by score descending with negatives placed above
    positives at equal scores; AP sums precision@k times the recall step at
    every positive position.
    """
    if not pooled:
        raise ValueError("empty pool")
    scores = np.array([s for s, _ in pooled])
    flags = np.array([f for _, f in pooled], dtype=bool)
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    n_pos = int(flags.sum())
    if n_pos == 0:
        raise ValueError("no positives in the pool")
    order = np.lexsort((flags, -scores))  # score desc, negatives first on ties
    sorted_flags = flags[order]
    cum_pos = np.cumsum(sorted_flags)
    positions = np.nonzero(sorted_flags)[0]
    precisions = cum_pos[positions] / (positions + 1)
    return float(precisions.sum() / n_pos)


# ----------------------------------------------------------------------
# negative sampling

def sample_test_negatives(g: TemporalGraph, seq: int, exclude: int,
                          cfg: EvalConfig) -> list[int]:
    """Uniform without replacement from the role pool before `seq`, never
    containing `exclude`; seeded per test edge so reruns are identical."""
    order, count = g.candidate_pool(seq, cfg.role)
    avail = count - (1 if g.in_pool(exclude, seq, cfg.role) else 0)
    if avail < 1:
        raise ValueError(f"no negative candidates observed before seq {seq}")
    k = min(cfg.num_test_negatives, avail)
    if k == avail:
        return [node for node in order[:count] if node != exclude]
    rng = np.random.default_rng([cfg.seed, 2, seq])  # stream 2: test negatives
    idx = rng.choice(count, size=min(k + 1, count), replace=False)
    picked = [order[i] for i in idx if order[i] != exclude]
    return picked[:k]


# ----------------------------------------------------------------------
# streaming evaluation

class _Phase:
    """Accumulates wall-clock per phase."""

    def __init__(self):
        self.update = 0.0
        self.infer = 0.0
        self.tune = 0.0


def _score_candidates(g: TemporalGraph, seq: int, candidates: list[int],
                      scorer: str, scoring: ScoringConfig,
                      params: MlpParams | None, store: TpprStore | None,
                      cache: RepCache | None,
                      rng: np.random.Generator | None) -> CandidateScores:
    ev = g.event(seq)
    v, t = ev.source, ev.timestamp
    m = len(candidates)
    s_ta = np.zeros(m)
    s_sa = np.zeros(m)
    rec = np.zeros(m)
    if scorer in ("time", "hybrid"):
        h_v = cache.rep(v, t, before_seq=seq, rng=rng)
        rows = np.empty((m, 2 * h_v.size))
        rows[:, : h_v.size] = h_v
        for i, c in enumerate(candidates):
            rows[i, h_v.size:] = cache.rep(c, t, before_seq=seq, rng=rng)
        s_ta = mlp_forward(params, rows, head="sigmoid")[:, 0]
    if scorer in ("struct", "hybrid"):
        pi_v = store.entries(v)
        s_sa = np.array([structure_score(pi_v, store.entries(c)) for c in candidates])
    if scorer == "hybrid":
        t_bar_v = g.mean_recency_interval(v, t, scoring.k_r, before_seq=seq)
        rec = np.array([
            recency_weight(t_bar_v,
                           g.mean_recency_interval(c, t, scoring.k_r, before_seq=seq),
                           scoring.time_scale)
            for c in candidates
        ])
    return CandidateScores(s_ta, s_sa, rec)


def _stream_groups(g: TemporalGraph, seqs, scorer: str, eval_cfg: EvalConfig,
                   scoring: ScoringConfig, params, store, cache, phase: _Phase,
                   advance_store: bool) -> list[CandidateScores]:
    groups = []
    for seq in seqs:
        ev = g.event(seq)
        t0 = time.perf_counter()
        negs = sample_test_negatives(g, seq, ev.destination, eval_cfg)
        rng = (np.random.default_rng([eval_cfg.seed, 4, seq])
               if scoring.neighbor_strategy == "uniform" else None)
        groups.append(_score_candidates(g, seq, [ev.destination] + negs, scorer,
                                        scoring, params, store, cache, rng))
        phase.infer += time.perf_counter() - t0
        if advance_store and store is not None:
            t0 = time.perf_counter()
            store.update([seq])
            phase.update += time.perf_counter() - t0
    return groups


def _reduce(groups: list[CandidateScores], scorer: str, lam: float,
            eval_cfg: EvalConfig) -> tuple[float, float, dict[int, float], list[int]]:
    ranks = []
    pooled: list[tuple[float, bool]] = []
    for grp in groups:
        scores = _scores(grp, scorer, lam)
        ranks.append(rank_positive(float(scores[0]), scores[1:]))
        if eval_cfg.ap_mode == "pooled":
            pooled.append((float(scores[0]), True))
            pooled.extend((float(s), False) for s in scores[1:])
    if eval_cfg.ap_mode == "per-edge":
        ap = float(np.mean([1.0 / r for r in ranks]))
    else:
        ap = average_precision(pooled)
    hr = {n: hit_ratio(ranks, n) for n in eval_cfg.hr_cutoffs}
    return ap, mrr(ranks), hr, ranks


def prepare_store(g: TemporalGraph, scoring: ScoringConfig, upto_seq: int,
                  phase: _Phase | None = None) -> TpprStore:
    """Fresh walk store advanced over events [0, upto_seq)."""
    store = TpprStore(g, scoring.tppr)
    t0 = time.perf_counter()
    if upto_seq > 0:
        store.update_range(0, upto_seq)
    if phase is not None:
        phase.update += time.perf_counter() - t0
    return store


def evaluate(g: TemporalGraph, split: DatasetSplit, scorer: str,
             eval_cfg: EvalConfig, scoring: ScoringConfig,
             params: MlpParams | None = None, store: TpprStore | None = None,
             t_train_s: float = 0.0, tune_on_validation: bool = False,
             lambda_grid: tuple[float, ...] = LAMBDA_GRID) -> EvalReport:
    """Stream the test split and aggregate AP / MRR / HR@N.

    Prior test events are folded into the graph frontier and the walk store
    before each prediction. With `tune_on_validation`, the trade-off weight
    is first chosen by streaming the validation split the same way (the
    store must then enter at the training frontier).

    A supplied `store` must already be advanced to the split position this
    call expects; omit it to have one built here (its bulk update is counted
    as update time).
    """
    if scorer not in SCORERS:
        raise ValueError(f"unknown scorer {scorer!r}; expected one of {SCORERS}")
    if scorer in ("time", "hybrid") and params is None:
        raise ValueError(f"scorer {scorer!r} requires a trained checkpoint (params)")
    test_seqs = list(split.test_range)
    if not test_seqs:
        raise ValueError("empty test split")

    phase = _Phase()
    scoring_used = scoring
    cache = (RepCache(g, scoring.k_r, scoring.neighbor_strategy, scoring.divide_by_k_r)
             if scorer in ("time", "hybrid") else None)
    needs_store = scorer in ("struct", "hybrid")

    if needs_store and store is None:
        boundary = split.train_end_seq if (scorer == "hybrid" and tune_on_validation) \
            else split.valid_end_seq
        store = prepare_store(g, scoring, boundary, phase)

    if scorer == "hybrid" and tune_on_validation:
        if store.frontier_seq != split.train_end_seq - 1:
            raise ValueError("store must be at the training frontier for tuning")
        t0 = time.perf_counter()
        valid_groups = _stream_groups(g, split.valid_range, scorer, eval_cfg,
                                      scoring, params, store, cache, phase, True)
        lam = tune_lambda(valid_groups, lambda_grid)
        scoring_used = scoring.with_lam(lam)
        phase.tune += time.perf_counter() - t0
    elif needs_store and store.frontier_seq != split.valid_end_seq - 1:
        raise ValueError("store must be at the validation frontier for testing")

    groups = _stream_groups(g, test_seqs, scorer, eval_cfg, scoring_used,
                            params, store, cache, phase, needs_store)
    ap, mrr_val, hr, ranks = _reduce(groups, scorer, scoring_used.lam, eval_cfg)

    report = EvalReport(
        scorer=scorer, ap=ap, mrr=mrr_val, hr=hr, n_edges=len(test_seqs),
        t_train_s=t_train_s, t_update_s=phase.update, t_infer_s=phase.infer,
        t_tune_s=phase.tune, peak_memory_bytes=peak_memory_bytes(),
        config=_config_echo(scoring_used, eval_cfg),
    )
    report.validate()
    if hit_ratio(ranks, 1) > report.mrr + 1e-12:
        raise AssertionError("HR@1 exceeded MRR")
    return report


def _scores(grp: CandidateScores, scorer: str, lam: float) -> np.ndarray:
    if scorer == "time":
        return grp.s_ta
    if scorer == "struct":
        return grp.s_sa
    return grp.hybrid(lam)


def _config_echo(scoring: ScoringConfig, eval_cfg: EvalConfig) -> dict:
    return {
        "k_r": scoring.k_r, "k_s": scoring.k_s, "lam": scoring.lam,
        "time_scale": scoring.time_scale, "alpha": scoring.tppr.alpha,
        "beta": scoring.tppr.beta, "update_rule": scoring.tppr.update_rule,
        "neighbor_strategy": scoring.neighbor_strategy,
        "num_test_negatives": eval_cfg.num_test_negatives,
        "seed": eval_cfg.seed, "ap_mode": eval_cfg.ap_mode, "role": eval_cfg.role,
    }


def peak_memory_bytes() -> int:
    """Peak resident set of this process (bytes)."""
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024


def aggregate_reports(reports: list[EvalReport]) -> dict:
    """Mean and sample std of each metric across seeds."""
    if not reports:
        raise ValueError("no reports to aggregate")

    def stats(values):
        arr = np.asarray(values, dtype=np.float64)
        std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
        return {"mean": float(arr.mean()), "std": std}

    out = {"n_runs": len(reports), "ap": stats([r.ap for r in reports]),
           "mrr": stats([r.mrr for r in reports])}
    cutoffs = sorted(reports[0].hr)
    out["hr"] = {str(n): stats([r.hr[n] for r in reports]) for n in cutoffs}
    return out
