"""Append-only continuous-time dynamic graph with time-indexed neighbor access.

The graph is an ordered log of timestamped interaction events plus, for each
node, a time-ordered adjacency list. Every event is inserted into the lists of
BOTH endpoints, so bipartite user-item streams expose history on both sides.
All queries are capped by a timestamp and, optionally, by an ingestion index
(`before_seq`) so that feature extraction for an event never observes the
event itself or anything simultaneous-but-later in the log.

Single-writer append, any number of readers between ingestion batches; an
ingest call is atomic with respect to readers.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field

import numpy as np

ROLE_DESTINATION = "destination"
ROLE_ANY = "any"

_STRATEGIES = ("recent", "old", "uniform")


@dataclass(frozen=True)
class Event:
    """One timestamped interaction; the atomic ingestion unit."""

    source: int
    destination: int
    timestamp: float
    features: np.ndarray
    seq: int
    label: float = 0.0


@dataclass(frozen=True)
class DatasetSplit:
    """Chronological train/valid/test boundaries over the event log."""

    train_end_seq: int
    valid_end_seq: int
    num_events: int
    fractions: tuple[float, float, float] = (0.70, 0.15, 0.15)

    @property
    def train_range(self) -> range:
        return range(0, self.train_end_seq)

    @property
    def valid_range(self) -> range:
        return range(self.train_end_seq, self.valid_end_seq)

    @property
    def test_range(self) -> range:
        return range(self.valid_end_seq, self.num_events)


class _Adjacency:
    """Per-node parallel lists, sorted by (timestamp, seq) by construction."""

    __slots__ = ("ids", "ts", "seqs")

    def __init__(self):
        self.ids: list[int] = []
        self.ts: list[float] = []
        self.seqs: list[int] = []


class TemporalGraph:
    """Event log + per-node neighbor index + node/edge feature tables.

    Node ids are dense non-negative ints; ingesting an event with a new id
    grows the node table. Edge features are stored once per event in a
    row-per-seq matrix shared by both endpoints' adjacency entries.
    """

    def __init__(self, d_x: int, d_e: int, bipartite: bool = False,
                 node_features: np.ndarray | None = None):
        if d_x < 0 or d_e < 0:
            raise ValueError("feature dimensions must be non-negative")
        self.d_x = d_x
        self.d_e = d_e
        self.bipartite = bipartite
        self.num_nodes = 0
        self._src: list[int] = []
        self._dst: list[int] = []
        self._ts: list[float] = []
        self._labels: list[float] = []
        self._feat = np.empty((0, d_e), dtype=np.float32)
        self._nbr: dict[int, _Adjacency] = {}
        self._node_features = None
        if node_features is not None:
            self.set_node_features(node_features)
        # first-seen bookkeeping for negative-candidate pools
        self._dst_first: dict[int, int] = {}
        self._dst_order: list[int] = []
        self._dst_seqs: list[int] = []
        self._any_first: dict[int, int] = {}
        self._any_order: list[int] = []
        self._any_seqs: list[int] = []

    # ------------------------------------------------------------------
    # ingestion

    @property
    def num_events(self) -> int:
        return len(self._src)

    @property
    def last_timestamp(self) -> float:
        return self._ts[-1] if self._ts else -math.inf

    def set_node_features(self, table: np.ndarray) -> None:
        table = np.asarray(table, dtype=np.float64)
        if table.ndim != 2 or table.shape[1] != self.d_x:
            raise ValueError(f"node feature table must be (n, {self.d_x})")
        self._node_features = table
        self.num_nodes = max(self.num_nodes, table.shape[0])

    def node_feature(self, v: int) -> np.ndarray:
        """Feature vector of `v`; zeros when the table has no row for it."""
        if self._node_features is not None and v < self._node_features.shape[0]:
            return self._node_features[v]
        return np.zeros(self.d_x)

    def ingest(self, source: int, destination: int, timestamp: float,
               features: np.ndarray | None = None, label: float = 0.0) -> int:
        """Append one event; returns its ingestion index (seq).

        The log is append-only chronological: a timestamp earlier than the
        last ingested one is rejected.
        """
        if timestamp < self.last_timestamp:
            raise ValueError(
                f"timestamp regression: {timestamp} < last ingested {self.last_timestamp}"
            )
        if features is None:
            features = np.zeros(self.d_e, dtype=np.float32)
        else:
            features = np.asarray(features, dtype=np.float32)
            if features.shape != (self.d_e,):
                raise ValueError(f"edge features must have length {self.d_e}")
        seq = len(self._src)
        if seq >= self._feat.shape[0]:
            self._grow_feat()
        self._feat[seq] = features
        self._src.append(source)
        self._dst.append(destination)
        self._ts.append(float(timestamp))
        self._labels.append(float(label))
        self._append_neighbor(source, destination, timestamp, seq)
        self._append_neighbor(destination, source, timestamp, seq)
        self.num_nodes = max(self.num_nodes, source + 1, destination + 1)
        if destination not in self._dst_first:
            self._dst_first[destination] = seq
            self._dst_order.append(destination)
            self._dst_seqs.append(seq)
        for v in (source, destination):
            if v not in self._any_first:
                self._any_first[v] = seq
                self._any_order.append(v)
                self._any_seqs.append(seq)
        return seq

    def _grow_feat(self) -> None:
        cap = max(1024, 2 * self._feat.shape[0])
        grown = np.empty((cap, self.d_e), dtype=np.float32)
        grown[: self._feat.shape[0]] = self._feat
        self._feat = grown

    def _append_neighbor(self, v: int, other: int, ts: float, seq: int) -> None:
        adj = self._nbr.get(v)
        if adj is None:
            adj = self._nbr[v] = _Adjacency()
        adj.ids.append(other)
        adj.ts.append(float(ts))
        adj.seqs.append(seq)

    # ------------------------------------------------------------------
    # event access

    def event(self, seq: int) -> Event:
        return Event(self._src[seq], self._dst[seq], self._ts[seq],
                     self._feat[seq], seq, self._labels[seq])

    def events(self, lo: int = 0, hi: int | None = None):
        """Iterate events with seq in [lo, hi)."""
        hi = self.num_events if hi is None else hi
        for seq in range(lo, hi):
            yield self.event(seq)

    def edge_features(self, seq: int) -> np.ndarray:
        return self._feat[seq]

    def timestamp_of(self, seq: int) -> float:
        return self._ts[seq]

    def label_of(self, seq: int) -> float:
        return self._labels[seq]

    # ------------------------------------------------------------------
    # neighbor queries

    def _visible(self, v: int, t: float | None, before_seq: int | None) -> tuple[_Adjacency | None, int]:
        """Adjacency of v with the count of entries visible at (t, before_seq).

        Visible entries have timestamp <= t and seq < before_seq. Lists are
        sorted by (timestamp, seq), and timestamps are non-decreasing in seq,
        so both caps are prefix cuts.
        """
        adj = self._nbr.get(v)
        if adj is None:
            return None, 0
        hi = len(adj.ids)
        if t is not None:
            hi = bisect_right(adj.ts, t, 0, hi)
        if before_seq is not None:
            hi = bisect_left(adj.seqs, before_seq, 0, hi)
        return adj, hi

    def degree(self, v: int, t: float | None = None, before_seq: int | None = None) -> int:
        """Number of neighbor-list entries visible at the given caps."""
        return self._visible(v, t, before_seq)[1]

    def recent_neighbors(self, v: int, t: float, k: int, strategy: str = "recent",
                         before_seq: int | None = None,
                         rng: np.random.Generator | None = None
                         ) -> list[tuple[int, np.ndarray, float]]:
        """Up to k neighbor entries of v visible at time t.

        `recent` returns the k latest by (timestamp, seq), most recent first;
        `old` the k earliest, oldest first; `uniform` a seeded sample without
        replacement. Unknown nodes yield an empty list (inductive nodes are
        expected). Pure function of the log prefix up to (t, before_seq).
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        if strategy not in _STRATEGIES:
            raise ValueError(f"unknown strategy {strategy!r}; expected one of {_STRATEGIES}")
        adj, hi = self._visible(v, t, before_seq)
        if hi == 0:
            return []
        if strategy == "recent":
            idx = range(hi - 1, max(-1, hi - 1 - k), -1)
        elif strategy == "old":
            idx = range(0, min(k, hi))
        else:
            if rng is None:
                raise ValueError("uniform strategy requires an rng")
            take = min(k, hi)
            idx = sorted(rng.choice(hi, size=take, replace=False).tolist())
        feat = self._feat
        return [(adj.ids[i], feat[adj.seqs[i]], adj.ts[i]) for i in idx]

    def neighbor_slice(self, v: int, t: float | None = None,
                       before_seq: int | None = None
                       ) -> tuple[list[int], list[float], list[int]]:
        """(ids, timestamps, seqs) of all visible entries, oldest first."""
        adj, hi = self._visible(v, t, before_seq)
        if hi == 0:
            return [], [], []
        return adj.ids[:hi], adj.ts[:hi], adj.seqs[:hi]

    def mean_recency_interval(self, v: int, t: float, k_r: int,
                              before_seq: int | None = None) -> float:
        """Mean of (t - tau_i) over the min(k_r, degree) most recent entries.

        Returns math.inf when the node has no visible history, so that the
        downstream recency weight exp(-t_bar) vanishes.
        """
        adj, hi = self._visible(v, t, before_seq)
        if hi == 0:
            return math.inf
        lo = max(0, hi - k_r)
        ts = adj.ts
        return sum(t - ts[i] for i in range(lo, hi)) / (hi - lo)

    # ------------------------------------------------------------------
    # candidate pools and splits

    def candidate_pool(self, before_seq: int, role: str = ROLE_DESTINATION
                       ) -> tuple[list[int], int]:
        """Nodes observed in the given role before `before_seq`.

        Returns (order, count): the first `count` entries of `order` are the
        pool, in first-seen order. The list is shared, not copied.
        """
        if role == ROLE_DESTINATION:
            order, seqs = self._dst_order, self._dst_seqs
        elif role == ROLE_ANY:
            order, seqs = self._any_order, self._any_seqs
        else:
            raise ValueError(f"unknown role {role!r}")
        return order, bisect_left(seqs, before_seq)

    def in_pool(self, node: int, before_seq: int, role: str = ROLE_DESTINATION) -> bool:
        first = self._dst_first if role == ROLE_DESTINATION else self._any_first
        seq = first.get(node)
        return seq is not None and seq < before_seq

    @property
    def has_node_features(self) -> bool:
        return self._node_features is not None

    def split(self, fractions: tuple[float, float, float] = (0.70, 0.15, 0.15)
              ) -> DatasetSplit:
        """Chronological split at floor(n * f) cumulative boundaries."""
        if len(fractions) != 3 or any(f <= 0 for f in fractions):
            raise ValueError("fractions must be three positive numbers")
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise ValueError("fractions must sum to 1")
        n = self.num_events
        if n == 0:
            raise ValueError("cannot split an empty graph")
        train_end = int(math.floor(n * fractions[0]))
        valid_end = int(math.floor(n * (fractions[0] + fractions[1])))
        if not (0 < train_end < valid_end < n):
            raise ValueError(
                f"degenerate split for {n} events: boundaries {train_end}, {valid_end}"
            )
        return DatasetSplit(train_end, valid_end, n, tuple(fractions))

    # ------------------------------------------------------------------

    def mean_inter_event_gap(self, lo: int = 0, hi: int | None = None) -> float:
        """Mean gap between consecutive event timestamps in [lo, hi).

        Used to normalize recency intervals; returns 1.0 when the range has
        fewer than two events or zero span.
        """
        hi = self.num_events if hi is None else hi
        if hi - lo < 2:
            return 1.0
        span = self._ts[hi - 1] - self._ts[lo]
        return span / (hi - lo - 1) if span > 0 else 1.0
