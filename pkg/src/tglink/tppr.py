"""Temporal personalized PageRank over the event stream.

Transition probabilities decay exponentially with neighbor recency rank: the
k-th most recent temporal neighbor of a node receives weight proportional to
beta**k (ranks are total: equal timestamps break by ingestion order, oldest
first). The walk continues with probability alpha and restarts at the owner
with probability 1 - alpha, so an isolated node's vector is (1 - alpha) on
itself and total mass never exceeds 1.

Two maintenance rules are provided:

* ``iterate`` (default) — on update, each touched endpoint's vector is
  re-solved by bounded sparse fixed-point iteration at that node's last-touch
  frontier; any other vector is refreshed lazily on read, so reads always
  agree with the dense oracle within the convergence tolerance.
* ``scan`` — a constant-time streaming rule: an event rescales the endpoint's
  transition row by a closed-form factor and folds the partner's current
  vector in, giving O(k_s log k_s) per event. This is a first-order
  approximation suited to large streams; it does not carry the oracle
  guarantee.

Updates are single-writer; reads between update batches are safe and the lazy
refresh is idempotent (a pure function of the log prefix at the frontier).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse import csr_matrix

from .graph import TemporalGraph


@dataclass(frozen=True)
class TpprConfig:
    """Walk parameters and maintenance policy.

    alpha is capped at 0.95: without a restart term the iteration need not
    converge. beta = 1 is allowed and yields uniform transition rows.
    """

    alpha: float = 0.5
    beta: float = 0.9
    k_s: int = 20
    convergence_eps: float = 1e-6
    max_iters: int = 200
    prune_eps: float = 1e-8
    oracle_cap: int = 2000
    include_self: bool = True
    update_rule: str = "iterate"
    stale_batches: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 0.95:
            raise ValueError("alpha must be in (0, 0.95]")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("beta must be in (0, 1]")
        if self.k_s < 1:
            raise ValueError("k_s must be >= 1")
        if self.convergence_eps <= 0:
            raise ValueError("convergence_eps must be positive")
        if self.update_rule not in ("iterate", "scan"):
            raise ValueError("update_rule must be 'iterate' or 'scan'")


@dataclass
class TpprVector:
    """Sparse top-k_s slice of one node's walk distribution."""

    owner: int
    entries: dict[int, float]
    as_of_seq: int


@dataclass(frozen=True)
class TransitionRow:
    owner: int
    ids: np.ndarray
    probs: np.ndarray

    def as_pairs(self) -> list[tuple[int, float]]:
        return [(int(i), float(p)) for i, p in zip(self.ids, self.probs)]


# ----------------------------------------------------------------------
# transition rows

def transition_arrays(g: TemporalGraph, v: int, beta: float,
                      t: float | None = None, before_seq: int | None = None
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Per-partner transition probabilities of v at the given caps.

    Probabilities for repeat partners are summed into one entry; ids are
    returned sorted ascending. Empty arrays for a node with no history.
    """
    ids, _, _ = g.neighbor_slice(v, t, before_seq)
    n = len(ids)
    if n == 0:
        return np.empty(0, dtype=np.int64), np.empty(0)
    # entries are oldest-first; the most recent entry has rank 1
    weights = np.power(beta, np.arange(n, 0, -1, dtype=np.float64))
    total = weights.sum()
    uniq, inverse = np.unique(np.asarray(ids, dtype=np.int64), return_inverse=True)
    probs = np.bincount(inverse, weights=weights / total)
    return uniq, probs


def transition_row(g: TemporalGraph, v: int, t: float | None, beta: float,
                   before_seq: int | None = None) -> TransitionRow:
    if not 0.0 < beta <= 1.0:
        raise ValueError("beta must be in (0, 1]")
    ids, probs = transition_arrays(g, v, beta, t, before_seq)
    return TransitionRow(v, ids, probs)


def _transition_csr(g: TemporalGraph, beta: float, before_seq: int | None):
    """Column-oriented transition operator for row-vector iteration.

    Returns M with M @ pi == pi @ P for the prefix-capped transition matrix P.
    """
    n = g.num_nodes
    indptr = np.empty(n + 1, dtype=np.int64)
    indptr[0] = 0
    all_ids: list[np.ndarray] = []
    all_probs: list[np.ndarray] = []
    for v in range(n):
        ids, probs = transition_arrays(g, v, beta, before_seq=before_seq)
        all_ids.append(ids)
        all_probs.append(probs)
        indptr[v + 1] = indptr[v] + len(ids)
    indices = np.concatenate(all_ids) if all_ids else np.empty(0, dtype=np.int64)
    data = np.concatenate(all_probs) if all_probs else np.empty(0)
    p = csr_matrix((data, indices, indptr), shape=(n, n))
    return p.T.tocsr()


# ----------------------------------------------------------------------
# dense oracle

def dense_transition_matrix(g: TemporalGraph, beta: float,
                            t: float | None = None,
                            before_seq: int | None = None) -> np.ndarray:
    n = g.num_nodes
    P = np.zeros((n, n))
    for v in range(n):
        ids, probs = transition_arrays(g, v, beta, t, before_seq)
        P[v, ids] = probs
    return P


def tppr_dense_oracle(g: TemporalGraph, v: int, cfg: TpprConfig,
                      t: float | None = None, before_seq: int | None = None,
                      P: np.ndarray | None = None,
                      init: str = "restart") -> np.ndarray:
    """Full-length walk vector by dense fixed-point iteration.

    Iterates pi <- alpha * pi @ P + (1 - alpha) * r from the restart vector
    (or all-ones with init="ones"; the fixed point is the same) until the L1
    change drops below convergence_eps or max_iters is reached. Intended for
    verification on graphs up to `oracle_cap` nodes.
    """
    n = g.num_nodes
    if n > cfg.oracle_cap:
        raise ValueError(
            f"{n} nodes exceeds the oracle cap {cfg.oracle_cap}; use the sparse path"
        )
    if P is None:
        P = dense_transition_matrix(g, cfg.beta, t, before_seq)
    r = np.zeros(n)
    r[v] = 1.0
    pi = np.ones(n) if init == "ones" else r.copy()
    for _ in range(cfg.max_iters):
        nxt = cfg.alpha * (pi @ P) + (1.0 - cfg.alpha) * r
        delta = np.abs(nxt - pi).sum()
        pi = nxt
        if delta < cfg.convergence_eps:
            break
    return pi


# ----------------------------------------------------------------------
# store

def _truncate(entries: dict[int, float], k: int) -> dict[int, float]:
    """Top-k by score descending, ties by node id ascending."""
    if len(entries) <= k:
        return entries
    ranked = sorted(entries.items(), key=lambda kv: (-kv[1], kv[0]))
    return dict(ranked[:k])


def top_k_nodes(vec: TpprVector) -> list[tuple[int, float]]:
    """Entries sorted by score descending, ties by node id ascending."""
    return sorted(vec.entries.items(), key=lambda kv: (-kv[1], kv[0]))


def geometric_weight_sum(beta: float, n: int) -> float:
    """Sum of beta**z for z = 1..n."""
    if n <= 0:
        return 0.0
    if beta == 1.0:
        return float(n)
    return beta * (1.0 - beta ** n) / (1.0 - beta)


class TpprStore:
    """Per-node top-k_s walk vectors maintained under the event stream.

    The store owns its frontier: `update` advances it over already-ingested
    events, and reads never observe anything past it even if the backing
    graph holds later events.
    """

    def __init__(self, g: TemporalGraph, cfg: TpprConfig):
        self.g = g
        self.cfg = cfg
        self.frontier_seq = -1
        self.vectors: dict[int, TpprVector] = {}
        self._batch_floors: list[int] = []
        self._csr_cache_key: int | None = None
        self._csr_cache = None

    # -- update -------------------------------------------------------

    def update(self, seqs: range | list[int]) -> None:
        """Fold the given already-ingested events (by seq, in order) in."""
        seqs = list(seqs)
        if not seqs:
            return
        if seqs[0] <= self.frontier_seq:
            raise ValueError(
                f"events up to seq {self.frontier_seq} already applied; got seq {seqs[0]}"
            )
        if seqs[-1] >= self.g.num_events:
            raise ValueError("events must be ingested into the graph before updating")
        self._batch_floors.append(self.frontier_seq)
        if self.cfg.update_rule == "scan":
            for s in seqs:
                self._scan_event(s)
        else:
            last_touch: dict[int, int] = {}
            for s in seqs:
                ev = self.g.event(s)
                last_touch[ev.source] = s
                last_touch[ev.destination] = s
            for v, s in sorted(last_touch.items(), key=lambda kv: (kv[1], kv[0])):
                self.vectors[v] = TpprVector(v, self._solve(v, s + 1), s)
        self.frontier_seq = seqs[-1]

    def update_range(self, lo: int, hi: int) -> None:
        self.update(range(lo, hi))

    def clone(self) -> "TpprStore":
        """Independent copy at the same frontier (shares the graph)."""
        other = TpprStore(self.g, self.cfg)
        other.frontier_seq = self.frontier_seq
        other.vectors = {v: TpprVector(vec.owner, dict(vec.entries), vec.as_of_seq)
                         for v, vec in self.vectors.items()}
        other._batch_floors = list(self._batch_floors)
        return other

    def _scan_event(self, s: int) -> None:
        ev = self.g.event(s)
        v, u = ev.source, ev.destination
        pi_v = self._current_entries(v)
        pi_u = self._current_entries(u)
        new_v = self._scan_merge(v, u, pi_v, pi_u, s)
        new_u = self._scan_merge(u, v, pi_u, pi_v, s)
        self.vectors[v] = TpprVector(v, new_v, s)
        self.vectors[u] = TpprVector(u, new_u, s)

    def _scan_merge(self, v: int, u: int, pi_v: dict[int, float],
                    pi_u: dict[int, float], s: int) -> dict[int, float]:
        """One-event endpoint rule.

        Gaining a most-recent neighbor rescales the old transition row by
        c = Z_n / (1 + Z_n) with Z_n the old geometric weight sum, and routes
        the remaining 1 - c through the new partner, so to first order
        pi_v <- c * pi_v + (1 - c) * ((1 - alpha) e_v + alpha * pi_u).
        """
        alpha = self.cfg.alpha
        n_before = self.g.degree(v, before_seq=s)
        z = geometric_weight_sum(self.cfg.beta, n_before)
        c = z / (1.0 + z)
        merged = {k: c * x for k, x in pi_v.items()}
        w = 1.0 - c
        merged[v] = merged.get(v, 0.0) + w * (1.0 - alpha)
        wa = w * alpha
        for k, x in pi_u.items():
            merged[k] = merged.get(k, 0.0) + wa * x
        return _truncate(merged, self.cfg.k_s)

    def _current_entries(self, v: int) -> dict[int, float]:
        vec = self.vectors.get(v)
        if vec is not None:
            return vec.entries
        return {v: 1.0 - self.cfg.alpha}

    # -- reads --------------------------------------------------------

    def get(self, v: int) -> TpprVector:
        """Vector of v at the frontier, refreshing a stale entry if needed.

        Under the iterate rule a vector older than `stale_batches` update
        batches is re-solved at the frontier (0 batches: any vector behind
        the frontier refreshes, so reads match the oracle). The scan rule
        returns maintained vectors as-is.
        """
        vec = self.vectors.get(v)
        if self.cfg.update_rule == "scan":
            if vec is None:
                vec = TpprVector(v, {v: 1.0 - self.cfg.alpha}, self.frontier_seq)
                self.vectors[v] = vec
            return vec
        if vec is None or vec.as_of_seq < self._refresh_floor():
            vec = TpprVector(v, self._solve(v, self.frontier_seq + 1), self.frontier_seq)
            self.vectors[v] = vec
        return vec

    def entries(self, v: int) -> dict[int, float]:
        ent = self.get(v).entries
        if not self.cfg.include_self:
            return {k: x for k, x in ent.items() if k != v}
        return ent

    def _refresh_floor(self) -> int:
        if self.cfg.stale_batches <= 0:
            return self.frontier_seq
        if len(self._batch_floors) < self.cfg.stale_batches:
            return -1
        return self._batch_floors[-self.cfg.stale_batches]

    # -- sparse solve (iterate rule) -----------------------------------

    def _solve(self, v: int, before_seq: int) -> dict[int, float]:
        """Bounded fixed-point iteration from the restart vector.

        Support is the set reachable from v; entries below prune_eps are
        dropped from the result. Truncated to the top k_s afterwards.
        """
        cfg = self.cfg
        m = self._operator(before_seq)
        n = m.shape[0]
        if v >= n:
            return {v: 1.0 - cfg.alpha}
        r = np.zeros(n)
        r[v] = 1.0
        base = (1.0 - cfg.alpha) * r
        pi = r
        for _ in range(cfg.max_iters):
            nxt = cfg.alpha * m.dot(pi) + base
            delta = np.abs(nxt - pi).sum()
            pi = nxt
            if delta < cfg.convergence_eps:
                break
        keep = np.nonzero(pi > cfg.prune_eps)[0]
        entries = {int(i): float(pi[i]) for i in keep}
        return _truncate(entries, cfg.k_s)

    def _operator(self, before_seq: int):
        if self._csr_cache_key != before_seq:
            self._csr_cache = _transition_csr(self.g, self.cfg.beta, before_seq)
            self._csr_cache_key = before_seq
        return self._csr_cache

    # -- snapshots ------------------------------------------------------

    def export_snapshot(self, path) -> None:
        """Sorted text format: `node_id k score_1 node_1 ... score_k node_k`."""
        with open(path, "w") as fh:
            for v in sorted(self.vectors):
                ranked = top_k_nodes(self.vectors[v])
                parts = [str(v), str(len(ranked))]
                for node, score in ranked:
                    parts.append(repr(score))
                    parts.append(str(node))
                fh.write(" ".join(parts) + "\n")

    @classmethod
    def import_snapshot(cls, path, g: TemporalGraph, cfg: TpprConfig,
                        frontier_seq: int) -> "TpprStore":
        store = cls(g, cfg)
        store.frontier_seq = frontier_seq
        with open(path) as fh:
            for line in fh:
                parts = line.split()
                if not parts:
                    continue
                v, k = int(parts[0]), int(parts[1])
                entries = {}
                for i in range(k):
                    score = float(parts[2 + 2 * i])
                    node = int(parts[3 + 2 * i])
                    entries[node] = score
                store.vectors[v] = TpprVector(v, entries, frontier_seq)
        return store


def structure_overlap(entries_v: dict[int, float], entries_u: dict[int, float]) -> float:
    """Sum of products over the shared support of two sparse vectors."""
    if len(entries_v) > len(entries_u):
        entries_v, entries_u = entries_u, entries_v
    return sum(x * entries_u[k] for k, x in entries_v.items() if k in entries_u)
