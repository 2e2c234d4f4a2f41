"""Training loop for the time-aware scorer.

Binary cross-entropy over chronological mini-batches: each positive event
contributes its true destination and a sampled negative destination. Feature
extraction for an example is capped at the example's own ingestion index, so
nothing simultaneous-or-later ever leaks in. Early stopping watches the
validation loss (1 negative per positive, drawn once) and the returned
checkpoint is the best-validation one.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .graph import ROLE_DESTINATION, TemporalGraph, DatasetSplit
from .nn import (AdamState, MlpParams, adam_step, bce_with_logits, init_mlp,
                 mlp_backward, mlp_forward)
from .scoring import RepCache, ScoringConfig


@dataclass(frozen=True)
class TrainConfig:
    epochs_max: int = 50
    patience: int = 5
    batch_size: int = 200
    learning_rate: float = 1e-3
    train_negatives_per_positive: int = 1
    seed: int = 0
    d_hidden: int = 128
    role: str = ROLE_DESTINATION

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.train_negatives_per_positive < 1:
            raise ValueError("train_negatives_per_positive must be >= 1")


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    valid_loss: float
    wall_clock_s: float

    def to_dict(self) -> dict:
        return {"epoch": self.epoch, "train_loss": self.train_loss,
                "valid_loss": self.valid_loss, "wall_clock_s": self.wall_clock_s}


def sample_train_negative(g: TemporalGraph, before_seq: int, exclude: int,
                          rng: np.random.Generator,
                          role: str = ROLE_DESTINATION) -> int:
    """Uniform draw from the nodes observed in the role before `before_seq`,
    never returning `exclude`."""
    order, count = g.candidate_pool(before_seq, role)
    if count < 2:
        raise ValueError(f"candidate pool has {count} nodes; need at least 2")
    while True:
        node = order[int(rng.integers(count))]
        if node != exclude:
            return node


def train_time_model(g: TemporalGraph, split: DatasetSplit, cfg: TrainConfig,
                     scoring: ScoringConfig
                     ) -> tuple[MlpParams, list[EpochLog]]:
    """Train the pair scorer on the training split; returns the best
    checkpoint by validation loss plus the per-epoch log."""
    d_in = 2 * (g.d_x + g.d_e)
    params = init_mlp(d_in, cfg.d_hidden, 1, cfg.seed)
    if cfg.epochs_max == 0:
        return params, []

    cache = RepCache(g, scoring.k_r, scoring.neighbor_strategy, scoring.divide_by_k_r)
    train_seqs = [s for s in split.train_range if _usable(g, s)]
    if not train_seqs:
        raise ValueError("no trainable events (candidate pools never reach 2 nodes)")
    valid_examples = _valid_examples(g, split, cfg)

    state = AdamState.for_params(params, lr=cfg.learning_rate)
    best_params = params.copy()
    best_loss = math.inf
    bad_epochs = 0
    logs: list[EpochLog] = []
    started = time.perf_counter()

    uniform = scoring.neighbor_strategy == "uniform"
    for epoch in range(cfg.epochs_max):
        rng = np.random.default_rng([cfg.seed, 1, epoch])  # stream 1: train negatives
        rng_u = np.random.default_rng([cfg.seed, 4, epoch]) if uniform else None
        epoch_losses = []
        for lo in range(0, len(train_seqs), cfg.batch_size):
            batch = train_seqs[lo: lo + cfg.batch_size]
            x, y = _assemble_batch(g, batch, cfg, cache, rng, rng_u)
            logits = _forward_logits(params, x)
            loss, dlogit = bce_with_logits(logits, y)
            if not math.isfinite(loss):
                raise RuntimeError(
                    f"non-finite training loss at epoch {epoch}, batch {lo // cfg.batch_size}"
                )
            grads, _ = mlp_backward(params, x, dlogit[:, None], head="none")
            params, state = adam_step(params, grads, state)
            epoch_losses.append(loss)
        valid_loss = _validation_loss(params, g, valid_examples, cache,
                                      np.random.default_rng([cfg.seed, 7]) if uniform else None)
        if not math.isfinite(valid_loss):
            raise RuntimeError(f"non-finite validation loss at epoch {epoch}")
        logs.append(EpochLog(epoch, float(np.mean(epoch_losses)), valid_loss,
                             time.perf_counter() - started))
        if valid_loss < best_loss:
            best_loss = valid_loss
            best_params = params.copy()
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= cfg.patience:
                break
    return best_params, logs


def _usable(g: TemporalGraph, seq: int) -> bool:
    _, count = g.candidate_pool(seq, ROLE_DESTINATION)
    return count >= 2


def _forward_logits(params: MlpParams, x: np.ndarray) -> np.ndarray:
    return mlp_forward(params, x, head="none")[:, 0]


def _assemble_batch(g: TemporalGraph, batch: list[int], cfg: TrainConfig,
                    cache: RepCache, rng: np.random.Generator,
                    rng_u: np.random.Generator | None = None
                    ) -> tuple[np.ndarray, np.ndarray]:
    npp = cfg.train_negatives_per_positive
    rows = []
    labels = []
    for seq in batch:
        ev = g.event(seq)
        h_v = cache.rep(ev.source, ev.timestamp, before_seq=seq, rng=rng_u)
        h_u = cache.rep(ev.destination, ev.timestamp, before_seq=seq, rng=rng_u)
        rows.append(np.concatenate([h_v, h_u]))
        labels.append(1.0)
        for _ in range(npp):
            neg = sample_train_negative(g, seq, ev.destination, rng, cfg.role)
            h_n = cache.rep(neg, ev.timestamp, before_seq=seq, rng=rng_u)
            rows.append(np.concatenate([h_v, h_n]))
            labels.append(0.0)
    return np.asarray(rows), np.asarray(labels)


def _valid_examples(g: TemporalGraph, split: DatasetSplit, cfg: TrainConfig
                    ) -> list[tuple[int, int, int, float, int]]:
    """(source, destination, negative, timestamp, seq) per validation event.

    Negatives are drawn once from a dedicated stream and reused across
    epochs so early stopping compares like against like.
    """
    rng = np.random.default_rng([cfg.seed, 5])  # stream 5: validation negatives
    out = []
    for seq in split.valid_range:
        if not _usable(g, seq):
            continue
        ev = g.event(seq)
        neg = sample_train_negative(g, seq, ev.destination, rng, cfg.role)
        out.append((ev.source, ev.destination, neg, ev.timestamp, seq))
    if not out:
        raise ValueError("no usable validation events")
    return out


def _validation_loss(params: MlpParams, g: TemporalGraph, examples, cache: RepCache,
                     rng_u: np.random.Generator | None = None) -> float:
    rows = []
    labels = []
    for v, u, neg, t, seq in examples:
        h_v = cache.rep(v, t, before_seq=seq, rng=rng_u)
        rows.append(np.concatenate([h_v, cache.rep(u, t, before_seq=seq, rng=rng_u)]))
        labels.append(1.0)
        rows.append(np.concatenate([h_v, cache.rep(neg, t, before_seq=seq, rng=rng_u)]))
        labels.append(0.0)
    logits = _forward_logits(params, np.asarray(rows))
    loss, _ = bce_with_logits(logits, np.asarray(labels))
    return loss
