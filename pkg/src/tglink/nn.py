"""Minimal dense layers: a 2-layer perceptron with manual gradients.

Forward map: head(W2 @ relu(W1 @ x + b1) + b2) with head one of sigmoid,
softmax, or none. Everything accumulates in double precision; forward and
backward are pure functions, parameter updates return fresh state so batched
inference can read frozen parameters concurrently.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

HEADS = ("sigmoid", "softmax", "none")

_MAGIC = b"TGLINK-MLP-V1\n"


@dataclass
class MlpParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        d_h, d_in = self.W1.shape
        d_out = self.W2.shape[0]
        if self.b1.shape != (d_h,) or self.W2.shape != (d_out, d_h) or self.b2.shape != (d_out,):
            raise ValueError("inconsistent parameter shapes")
        for a in (self.W1, self.b1, self.W2, self.b2):
            if not np.all(np.isfinite(a)):
                raise ValueError("parameters must be finite")

    @property
    def d_in(self) -> int:
        return self.W1.shape[1]

    @property
    def d_hidden(self) -> int:
        return self.W1.shape[0]

    @property
    def d_out(self) -> int:
        return self.W2.shape[0]

    def copy(self) -> "MlpParams":
        return MlpParams(self.W1.copy(), self.b1.copy(), self.W2.copy(), self.b2.copy())

    def arrays(self) -> tuple[np.ndarray, ...]:
        return (self.W1, self.b1, self.W2, self.b2)


@dataclass
class MlpGrads:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def arrays(self) -> tuple[np.ndarray, ...]:
        return (self.W1, self.b1, self.W2, self.b2)


def init_mlp(d_in: int, d_hidden: int, d_out: int, seed: int) -> MlpParams:
    """Seeded uniform(-a, a) weights with a = sqrt(6 / (fan_in + fan_out))."""
    rng = np.random.default_rng([seed, 0])  # stream id 0: parameter init
    a1 = math.sqrt(6.0 / (d_in + d_hidden))
    a2 = math.sqrt(6.0 / (d_hidden + d_out))
    return MlpParams(
        W1=rng.uniform(-a1, a1, size=(d_hidden, d_in)),
        b1=np.zeros(d_hidden),
        W2=rng.uniform(-a2, a2, size=(d_out, d_hidden)),
        b2=np.zeros(d_out),
    )


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    ez = np.exp(shifted)
    return ez / ez.sum(axis=-1, keepdims=True)


def _as_batch(x: np.ndarray, d_in: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        if x.shape[0] != d_in:
            raise ValueError(f"input length {x.shape[0]} != d_in {d_in}")
        return x[None, :], True
    if x.ndim != 2 or x.shape[1] != d_in:
        raise ValueError(f"input must be (batch, {d_in})")
    return x, False


def mlp_forward(p: MlpParams, x: np.ndarray, head: str = "sigmoid") -> np.ndarray:
    """Head output for a single input vector or a batch of rows."""
    if head not in HEADS:
        raise ValueError(f"unknown head {head!r}; expected one of {HEADS}")
    xb, single = _as_batch(x, p.d_in)
    h = np.maximum(xb @ p.W1.T + p.b1, 0.0)
    z = h @ p.W2.T + p.b2
    if head == "sigmoid":
        out = sigmoid(z)
    elif head == "softmax":
        out = softmax(z)
    else:
        out = z
    return out[0] if single else out


def mlp_backward(p: MlpParams, x: np.ndarray, upstream: np.ndarray,
                 head: str = "none") -> tuple[MlpGrads, np.ndarray]:
    """Gradients of sum(upstream * head_output) w.r.t. parameters and input.

    Batch rows are summed into the parameter gradients; the input gradient
    keeps the batch shape.
    """
    if head not in HEADS:
        raise ValueError(f"unknown head {head!r}; expected one of {HEADS}")
    xb, single = _as_batch(x, p.d_in)
    up = np.asarray(upstream, dtype=np.float64)
    if single:
        up = up[None, :]
    if up.shape != (xb.shape[0], p.d_out):
        raise ValueError(f"upstream must be (batch, {p.d_out})")

    a = xb @ p.W1.T + p.b1
    h = np.maximum(a, 0.0)
    z = h @ p.W2.T + p.b2

    if head == "sigmoid":
        s = sigmoid(z)
        dz = up * s * (1.0 - s)
    elif head == "softmax":
        s = softmax(z)
        dz = s * (up - (up * s).sum(axis=-1, keepdims=True))
    else:
        dz = up

    dW2 = dz.T @ h
    db2 = dz.sum(axis=0)
    dh = dz @ p.W2
    da = dh * (a > 0.0)
    dW1 = da.T @ xb
    db1 = da.sum(axis=0)
    dx = da @ p.W1
    return MlpGrads(dW1, db1, dW2, db2), (dx[0] if single else dx)


# ----------------------------------------------------------------------
# losses (stable forms)

def bce_with_logits(z: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy and its logit gradient (already averaged)."""
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    loss = np.maximum(z, 0.0) - y * z + np.log1p(np.exp(-np.abs(z)))
    grad = (sigmoid(z) - y) / z.size
    return float(loss.mean()), grad


def softmax_ce(z: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy against target distributions and the logit gradient."""
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    n = z.shape[0] if z.ndim == 2 else 1
    loss = -(y * log_probs).sum() / n
    grad = (np.exp(log_probs) - y) / n
    return float(loss), grad


# ----------------------------------------------------------------------
# optimizer

@dataclass
class AdamState:
    m: tuple[np.ndarray, ...]
    v: tuple[np.ndarray, ...]
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, p: MlpParams, lr: float = 1e-3) -> "AdamState":
        return cls(m=tuple(np.zeros_like(a) for a in p.arrays()),
                   v=tuple(np.zeros_like(a) for a in p.arrays()),
                   lr=lr)


def adam_step(p: MlpParams, g: MlpGrads, s: AdamState) -> tuple[MlpParams, AdamState]:
    """One bias-corrected moment update; deterministic given inputs."""
    new_params = []
    new_m = []
    new_v = []
    step = s.step + 1
    bc1 = 1.0 - s.beta1 ** step
    bc2 = 1.0 - s.beta2 ** step
    for a, grad, m, v in zip(p.arrays(), g.arrays(), s.m, s.v):
        if a.shape != grad.shape:
            raise ValueError("gradient shape mismatch")
        if not np.all(np.isfinite(grad)):
            raise ValueError("non-finite gradient (training diverged)")
        m2 = s.beta1 * m + (1.0 - s.beta1) * grad
        v2 = s.beta2 * v + (1.0 - s.beta2) * grad * grad
        update = s.lr * (m2 / bc1) / (np.sqrt(v2 / bc2) + s.eps)
        new_params.append(a - update)
        new_m.append(m2)
        new_v.append(v2)
    return (MlpParams(*new_params),
            AdamState(tuple(new_m), tuple(new_v), step, s.lr, s.beta1, s.beta2, s.eps))


# ----------------------------------------------------------------------
# finite differences

def gradient_check(p: MlpParams, x: np.ndarray, head: str,
                   upstream: np.ndarray, h: float = 1e-5) -> float:
    """Max mismatch between analytic and central-difference gradients.

    The scalar objective is sum(upstream * forward). Per-coordinate error is
    |analytic - numeric| / max(|analytic| + |numeric|, 1e-4) so near-zero
    coordinates are judged on an absolute scale.
    """
    grads, _ = mlp_backward(p, x, upstream, head=head)
    worst = 0.0
    for idx, (arr, grad) in enumerate(zip(p.arrays(), grads.arrays())):
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            mi = it.multi_index
            orig = arr[mi]
            arr[mi] = orig + h
            up_val = float(np.sum(upstream * mlp_forward(p, x, head=head)))
            arr[mi] = orig - h
            down = float(np.sum(upstream * mlp_forward(p, x, head=head)))
            arr[mi] = orig
            numeric = (up_val - down) / (2.0 * h)
            analytic = float(grad[mi])
            err = abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-4)
            worst = max(worst, err)
    return worst


# ----------------------------------------------------------------------
# checkpoints

def save_checkpoint(p: MlpParams, path: str | Path, seed: int | None = None) -> None:
    """Versioned binary (row-major little-endian float64) + JSON sidecar."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        for a in p.arrays():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    sidecar = {
        "version": 1,
        "dtype": "<f8",
        "order": ["W1", "b1", "W2", "b2"],
        "shapes": {
            "W1": list(p.W1.shape), "b1": list(p.b1.shape),
            "W2": list(p.W2.shape), "b2": list(p.b2.shape),
        },
        "seed": seed,
    }
    with open(path.with_suffix(path.suffix + ".json"), "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)


def load_checkpoint(path: str | Path) -> MlpParams:
    path = Path(path)
    with open(path.with_suffix(path.suffix + ".json")) as fh:
        sidecar = json.load(fh)
    if sidecar.get("version") != 1:
        raise ValueError(f"unsupported checkpoint version {sidecar.get('version')}")
    shapes = sidecar["shapes"]
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError(f"{path}: bad checkpoint header")
        arrays = []
        for name in sidecar["order"]:
            shape = tuple(shapes[name])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise ValueError(f"{path}: truncated checkpoint")
            arrays.append(np.frombuffer(buf, dtype="<f8").reshape(shape).copy())
    return MlpParams(*arrays)
