"""Node classification head over the two node representations.

A node at time t is summarized by its recent-neighbor mean (shared with the
link scorer) concatenated with a walk-weighted feature average over its
top-k_s nodes, and a 2-layer perceptron maps that to a label distribution
(softmax for single-label problems, per-label sigmoid for multi-label).
Rankings of the predicted categories are judged by NDCG@10 against the
ground-truth relevance.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import TemporalGraph
from .nn import (AdamState, MlpParams, adam_step, init_mlp, mlp_backward,
                 mlp_forward, softmax_ce, bce_with_logits)
from .scoring import ScoringConfig, time_aware_representation
from .tppr import TpprStore
from .training import EpochLog, TrainConfig


@dataclass(frozen=True)
class LabelRecord:
    """Ground truth for one node at one time: a relevance vector over categories."""

    node: int
    timestamp: float
    probs: np.ndarray


def nc_time_representation(g: TemporalGraph, v: int, t: float, k_r: int,
                           before_seq: int | None = None) -> np.ndarray:
    """Recent-neighbor mean; same code path as the link scorer's Eq. of state."""
    return time_aware_representation(g, v, t, k_r, before_seq=before_seq)


def nc_struct_representation(g: TemporalGraph, entries: dict[int, float],
                             k_s: int) -> np.ndarray:
    """(1/k_s) * sum of node features weighted by their walk scores.

    The divisor is the nominal k_s (the walk weights already discount any
    missing mass); an empty vector maps to zeros.
    """
    out = np.zeros(g.d_x)
    if not entries or not g.has_node_features:
        return out
    for node, score in entries.items():
        out += g.node_feature(node) * score
    return out / k_s


def nc_predict(p: MlpParams, h_r: np.ndarray, h_s: np.ndarray,
               head: str = "softmax", literal_concat: bool = False) -> np.ndarray:
    """Label distribution from the concatenated representations.

    `literal_concat` feeds [h_r, h_r] instead of [h_r, h_s]; kept for
    fidelity experiments only.
    """
    x = np.concatenate([h_r, h_r] if literal_concat else [h_r, h_s])
    return mlp_forward(p, x, head=head)


def ndcg_at_10(predicted: np.ndarray, truth: np.ndarray) -> float:
    """Discounted gain of the top-10 predicted categories over ideal.

    Gains are the ground-truth relevances; prediction and ideal orders break
    ties by category index ascending. 1.0 whenever the achieved ordering is
    ideal on the top 10 (in particular for uniform truth).
    """
    predicted = np.asarray(predicted, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if predicted.shape != truth.shape or predicted.ndim != 1:
        raise ValueError("predicted and truth must be equal-length vectors")
    k = min(10, truth.size)
    idx = np.arange(truth.size)
    discounts = 1.0 / np.log2(np.arange(k) + 2.0)
    pred_top = np.lexsort((idx, -predicted))[:k]
    ideal_top = np.lexsort((idx, -truth))[:k]
    dcg = float((truth[pred_top] * discounts).sum())
    idcg = float((truth[ideal_top] * discounts).sum())
    return dcg / idcg if idcg > 0 else 1.0


# ----------------------------------------------------------------------
# label streams

def load_labels(path: str | Path) -> list[LabelRecord]:
    """CSV `node_id,timestamp,p1,...,pk` (header line required)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    records = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if lineno == 1:
                continue
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            try:
                node = int(float(parts[0]))
                t = float(parts[1])
                probs = np.array([float(x) for x in parts[2:]])
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed label row: {exc}") from None
            if width is None:
                width = probs.size
            elif probs.size != width:
                raise ValueError(f"{path}:{lineno}: expected {width} label columns")
            records.append(LabelRecord(node, t, probs))
    if not records:
        raise ValueError(f"{path}: no label rows")
    records.sort(key=lambda r: r.timestamp)
    return records


def labels_from_state(g: TemporalGraph) -> list[LabelRecord]:
    """Binary label stream from the jodie state column: one record per event,
    for the source node, encoded as a 2-way distribution."""
    out = []
    for ev in g.events():
        y = np.array([1.0 - ev.label, ev.label])
        out.append(LabelRecord(ev.source, ev.timestamp, y))
    return out


# ----------------------------------------------------------------------
# training

@dataclass
class NodeClassifier:
    params: MlpParams
    head: str
    k_r: int
    k_s: int
    literal_concat: bool = False

    def predict(self, h_r: np.ndarray, h_s: np.ndarray) -> np.ndarray:
        return nc_predict(self.params, h_r, h_s, self.head, self.literal_concat)


def build_snapshots(g: TemporalGraph, labels: list[LabelRecord],
                    scoring: ScoringConfig) -> tuple[np.ndarray, np.ndarray]:
    """Feature/target matrices for the label stream, chronologically.

    The walk store frontier is advanced past exactly the events with
    timestamp <= each label's time before its features are read, so no
    snapshot sees its future.
    """
    store = TpprStore(g, scoring.tppr)
    feats = []
    targets = []
    frontier = 0
    ts = [g.timestamp_of(s) for s in range(g.num_events)]
    for rec in labels:
        upto = frontier
        while upto < g.num_events and ts[upto] <= rec.timestamp:
            upto += 1
        if upto > frontier:
            store.update_range(frontier, upto)
            frontier = upto
        h_r = nc_time_representation(g, rec.node, rec.timestamp, scoring.k_r,
                                     before_seq=frontier)
        h_s = nc_struct_representation(g, store.entries(rec.node), scoring.k_s)
        feats.append(np.concatenate([h_r, h_s]))
        targets.append(rec.probs)
    return np.asarray(feats), np.asarray(targets)


def train_nc_model(g: TemporalGraph, labels: list[LabelRecord],
                   cfg: TrainConfig, scoring: ScoringConfig,
                   head: str = "softmax",
                   fractions: tuple[float, float, float] = (0.70, 0.15, 0.15),
                   literal_concat: bool = False,
                   snapshots: tuple[np.ndarray, np.ndarray] | None = None
                   ) -> tuple[NodeClassifier, list[EpochLog]]:
    """Early-stopped classifier over chronological label snapshots."""
    if head not in ("softmax", "sigmoid"):
        raise ValueError("head must be 'softmax' or 'sigmoid'")
    x, y = snapshots if snapshots is not None else build_snapshots(g, labels, scoring)
    if literal_concat:
        x = np.concatenate([x[:, : g.d_x + g.d_e], x[:, : g.d_x + g.d_e]], axis=1)
    n = len(labels)
    train_end = int(math.floor(n * fractions[0]))
    valid_end = int(math.floor(n * (fractions[0] + fractions[1])))
    if not (0 < train_end < valid_end < n):
        raise ValueError(f"degenerate label split for {n} records")

    d_out = y.shape[1]
    params = init_mlp(x.shape[1], cfg.d_hidden, d_out, cfg.seed)
    clf = NodeClassifier(params, head, scoring.k_r, scoring.k_s, literal_concat)
    if cfg.epochs_max == 0:
        return clf, []

    loss_fn = softmax_ce if head == "softmax" else _bce_multi
    state = AdamState.for_params(params, lr=cfg.learning_rate)
    best = params.copy()
    best_loss = math.inf
    bad = 0
    logs: list[EpochLog] = []
    started = time.perf_counter()
    for epoch in range(cfg.epochs_max):
        epoch_losses = []
        for lo in range(0, train_end, cfg.batch_size):
            xb = x[lo: lo + cfg.batch_size]
            yb = y[lo: lo + cfg.batch_size]
            logits = mlp_forward(params, xb, head="none")
            loss, dlogit = loss_fn(logits, yb)
            if not math.isfinite(loss):
                raise RuntimeError(f"non-finite loss at epoch {epoch}, batch {lo // cfg.batch_size}")
            grads, _ = mlp_backward(params, xb, dlogit, head="none")
            params, state = adam_step(params, grads, state)
            epoch_losses.append(loss)
        v_logits = mlp_forward(params, x[train_end:valid_end], head="none")
        valid_loss, _ = loss_fn(v_logits, y[train_end:valid_end])
        logs.append(EpochLog(epoch, float(np.mean(epoch_losses)), valid_loss,
                             time.perf_counter() - started))
        if valid_loss < best_loss:
            best_loss, best, bad = valid_loss, params.copy(), 0
        else:
            bad += 1
            if bad >= cfg.patience:
                break
    clf.params = best
    return clf, logs


def _bce_multi(z: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    return bce_with_logits(z, y)


def evaluate_nc(clf: NodeClassifier, g: TemporalGraph, labels: list[LabelRecord],
                scoring: ScoringConfig,
                fractions: tuple[float, float, float] = (0.70, 0.15, 0.15),
                snapshots: tuple[np.ndarray, np.ndarray] | None = None) -> float:
    """Mean NDCG@10 over the chronological test tail of the label stream."""
    x, y = snapshots if snapshots is not None else build_snapshots(g, labels, scoring)
    if clf.literal_concat:
        x = np.concatenate([x[:, : g.d_x + g.d_e], x[:, : g.d_x + g.d_e]], axis=1)
    n = len(labels)
    valid_end = int(math.floor(n * (fractions[0] + fractions[1])))
    preds = mlp_forward(clf.params, x[valid_end:], head=clf.head)
    scores = [ndcg_at_10(pred, truth) for pred, truth in zip(preds, y[valid_end:])]
    return float(np.mean(scores))
