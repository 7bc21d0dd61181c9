"""Minimal deterministic neural-network core on float64 numpy arrays.

Every layer comes as a forward function returning (output, cache) and a
matching backward function consuming the upstream gradient plus that cache.
All passes are exact analytic gradients, verifiable against central finite
differences via grad_check. No autodiff, no GPU, no hidden state: given the
same inputs and generator states, every call is bit-reproducible.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import BadMagic, InvalidDistribution, OddDimension, ShapeMismatch, TruncatedFile

__all__ = [
    "ParamSet",
    "LstmLayer",
    "conv2d",
    "conv2d_backward",
    "maxpool2",
    "maxpool2_backward",
    "global_avg_pool",
    "global_avg_pool_backward",
    "dense",
    "dense_backward",
    "lstm_sequence",
    "lstm_sequence_backward",
    "dropout",
    "dropout_backward",
    "sigmoid",
    "softmax",
    "categorical_cross_entropy",
    "softmax_ce_grad",
    "adam_step",
    "grad_check",
    "glorot_uniform",
    "init_lstm",
    "save_tensors",
    "load_tensors",
]

DFNN_MAGIC = b"DFNN"
DFNN_VERSION = 1


@dataclass
class ParamSet:
    """Named parameters with matching gradient and Adam moment buffers."""

    params: dict[str, np.ndarray] = field(default_factory=dict)
    grads: dict[str, np.ndarray] = field(default_factory=dict)
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        arr = np.asarray(value, dtype=np.float64)
        self.params[name] = arr
        self.grads[name] = np.zeros_like(arr)
        self.m[name] = np.zeros_like(arr)
        self.v[name] = np.zeros_like(arr)
        return arr

    def zero_grads(self) -> None:
        for g in self.grads.values():
            g[...] = 0.0

    def count(self) -> int:
        return sum(p.size for p in self.params.values())


@dataclass
class LstmLayer:
    """Stacked gate parameters: w is [4H, X+H], b is [4H], gate order i,f,g,o."""

    input_size: int
    hidden_size: int
    w: np.ndarray
    b: np.ndarray

    def __post_init__(self) -> None:
        expect_w = (4 * self.hidden_size, self.input_size + self.hidden_size)
        if self.w.shape != expect_w or self.b.shape != (4 * self.hidden_size,):
            raise ShapeMismatch(
                f"LSTM parameters {self.w.shape}/{self.b.shape} inconsistent with "
                f"{self.input_size}->{self.hidden_size}"
            )


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_lstm(rng: np.random.Generator, input_size: int, hidden_size: int) -> LstmLayer:
    w = glorot_uniform(
        rng, (4 * hidden_size, input_size + hidden_size), input_size + hidden_size, hidden_size
    )
    b = np.zeros(4 * hidden_size)
    b[hidden_size : 2 * hidden_size] = 1.0  # forget gate open at start
    return LstmLayer(input_size, hidden_size, w, b)


# ---------------------------------------------------------------- convolution


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """Patch matrix [C*kh*kw, H'*W'] from a padded [C,H,W] input."""
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    windows = windows[:, ::stride, ::stride]  # [C, H', W', kh, kw]
    c, ho, wo = windows.shape[:3]
    return windows.transpose(0, 3, 4, 1, 2).reshape(c * kh * kw, ho * wo), ho, wo


def conv2d(x: np.ndarray, k: np.ndarray, stride: int = 1, pad: int = 0):
    """Cross-correlation of [C,H,W] with kernels [C_out,C,kh,kw], zero padding."""
    if x.ndim != 3 or k.ndim != 4:
        raise ShapeMismatch(f"conv2d wants [C,H,W] and [Co,C,kh,kw], got {x.shape}, {k.shape}")
    co, ci, kh, kw = k.shape
    if ci != x.shape[0]:
        raise ShapeMismatch(f"kernel expects {ci} channels, input has {x.shape[0]}")
    if stride < 1:
        raise ShapeMismatch(f"stride must be >= 1, got {stride}")
    if kh > x.shape[1] + 2 * pad or kw > x.shape[2] + 2 * pad:
        raise ShapeMismatch(f"kernel {kh}x{kw} exceeds padded input {x.shape}")
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad))) if pad else x
    cols, ho, wo = _im2col(xp, kh, kw, stride)
    y = (k.reshape(co, -1) @ cols).reshape(co, ho, wo)
    cache = (cols, x.shape, k, stride, pad, ho, wo)
    return y, cache


def conv2d_backward(dy: np.ndarray, cache):
    cols, x_shape, k, stride, pad, ho, wo = cache
    co, ci, kh, kw = k.shape
    dyf = dy.reshape(co, ho * wo)
    dk = (dyf @ cols.T).reshape(k.shape)
    dcols = (k.reshape(co, -1).T @ dyf).reshape(ci, kh, kw, ho, wo)
    hp, wp = x_shape[1] + 2 * pad, x_shape[2] + 2 * pad
    dxp = np.zeros((ci, hp, wp))
    for a in range(kh):
        for b in range(kw):
            dxp[:, a : a + stride * ho : stride, b : b + stride * wo : stride] += dcols[:, a, b]
    dx = dxp[:, pad : hp - pad, pad : wp - pad] if pad else dxp
    return dx, dk


# -------------------------------------------------------------------- pooling


def maxpool2(x: np.ndarray):
    """2x2 max pool, stride 2; ties go to the first element in row-major order."""
    c, h, w = x.shape
    if h % 2 or w % 2:
        raise OddDimension(f"maxpool2 needs even dimensions, got {h}x{w}")
    windows = x.reshape(c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 2, 4).reshape(
        c, h // 2, w // 2, 4
    )
    idx = windows.argmax(axis=-1)
    y = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
    return y, (idx, x.shape)


def maxpool2_backward(dy: np.ndarray, cache):
    idx, (c, h, w) = cache
    dwin = np.zeros((c, h // 2, w // 2, 4))
    np.put_along_axis(dwin, idx[..., None], dy[..., None], axis=-1)
    return dwin.reshape(c, h // 2, w // 2, 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h, w)


def global_avg_pool(x: np.ndarray):
    c, h, w = x.shape
    return x.mean(axis=(1, 2)), (c, h, w)


def global_avg_pool_backward(dy: np.ndarray, cache):
    c, h, w = cache
    return np.broadcast_to(dy[:, None, None] / (h * w), (c, h, w)).copy()


# ---------------------------------------------------------------------- dense


def dense(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    if w.ndim != 2 or x.shape != (w.shape[1],) or b.shape != (w.shape[0],):
        raise ShapeMismatch(f"dense shapes inconsistent: x{x.shape} w{w.shape} b{b.shape}")
    return w @ x + b, (x, w)


def dense_backward(dy: np.ndarray, cache):
    x, w = cache
    return w.T @ dy, np.outer(dy, x), dy.copy()


# ----------------------------------------------------------------------- lstm


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def lstm_sequence(layer: LstmLayer, xs: np.ndarray, h0: np.ndarray, c0: np.ndarray):
    """Run the cell over [T, input_size]; returns all hidden states [T, hidden]."""
    hsz = layer.hidden_size
    if xs.ndim != 2 or xs.shape[1] != layer.input_size:
        raise ShapeMismatch(f"xs {xs.shape} does not match input_size {layer.input_size}")
    if h0.shape != (hsz,) or c0.shape != (hsz,):
        raise ShapeMismatch(f"h0/c0 must be [{hsz}]")
    t_steps = xs.shape[0]
    hs = np.zeros((t_steps, hsz))
    steps = []
    h, c = h0, c0
    for t in range(t_steps):
        xh = np.concatenate([xs[t], h])
        z = layer.w @ xh + layer.b
        i = sigmoid(z[:hsz])
        f = sigmoid(z[hsz : 2 * hsz])
        g = np.tanh(z[2 * hsz : 3 * hsz])
        o = sigmoid(z[3 * hsz :])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h = o * tc
        hs[t] = h
        steps.append((xh, i, f, g, o, c, tc))
        c = c_new
    return hs, (layer, steps)


def lstm_sequence_backward(dhs: np.ndarray, cache):
    """BPTT: gradient of all hidden states back to inputs, params, h0, c0."""
    layer, steps = cache
    hsz = layer.hidden_size
    xsz = layer.input_size
    dw = np.zeros_like(layer.w)
    db = np.zeros_like(layer.b)
    dxs = np.zeros((len(steps), xsz))
    dh_next = np.zeros(hsz)
    dc_next = np.zeros(hsz)
    for t in range(len(steps) - 1, -1, -1):
        xh, i, f, g, o, c_prev, tc = steps[t]
        dh = dhs[t] + dh_next
        do = dh * tc
        dc = dh * o * (1.0 - tc * tc) + dc_next
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dc_next = dc * f
        dz = np.concatenate(
            [di * i * (1 - i), df * f * (1 - f), dg * (1 - g * g), do * o * (1 - o)]
        )
        dw += np.outer(dz, xh)
        db += dz
        dxh = layer.w.T @ dz
        dxs[t] = dxh[:xsz]
        dh_next = dxh[xsz:]
    return dxs, dw, db, dh_next, dc_next


# -------------------------------------------------------------------- dropout


def dropout(x: np.ndarray, rate: float, mode: str, rng: np.random.Generator | None = None):
    """Inverted dropout: train zeroes w.p. rate and scales survivors, eval is identity."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"rate must be in [0, 1), got {rate}")
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be train or eval, got {mode!r}")
    if mode == "eval" or rate == 0.0:
        return x.copy(), None
    if rng is None:
        raise ValueError("train-mode dropout needs a generator")
    keep = rng.random(x.shape) >= rate
    scale = 1.0 / (1.0 - rate)
    return x * keep * scale, (keep, scale)


def dropout_backward(dy: np.ndarray, cache):
    if cache is None:
        return dy.copy()
    keep, scale = cache
    return dy * keep * scale


# ------------------------------------------------------------ loss and update


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


def categorical_cross_entropy(y: np.ndarray, yhat: np.ndarray) -> float:
    """Loss = -ln(yhat at the true class); y must be one-hot, yhat a distribution."""
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape:
        raise InvalidDistribution(f"shape mismatch {y.shape} vs {yhat.shape}")
    if not (np.isin(y, (0.0, 1.0)).all() and y.sum() == 1.0):
        raise InvalidDistribution("y must be one-hot")
    if (yhat <= 0).any() or abs(yhat.sum() - 1.0) > 1e-9:
        raise InvalidDistribution("yhat must be strictly positive and sum to 1")
    return float(-np.log(yhat[np.argmax(y)]))


def softmax_ce_grad(y: np.ndarray, yhat: np.ndarray) -> np.ndarray:
    """Fused softmax + cross-entropy gradient w.r.t. the logits."""
    return yhat - y


def adam_step(
    ps: ParamSet,
    lr: float = 1e-5,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> ParamSet:
    """In-place bias-corrected Adam update from the stored gradients."""
    ps.step += 1
    bc1 = 1.0 - beta1**ps.step
    bc2 = 1.0 - beta2**ps.step
    for name, p in ps.params.items():
        g = ps.grads[name]
        ps.m[name] = beta1 * ps.m[name] + (1.0 - beta1) * g
        ps.v[name] = beta2 * ps.v[name] + (1.0 - beta2) * g * g
        mhat = ps.m[name] / bc1
        vhat = ps.v[name] / bc2
        p -= lr * mhat / (np.sqrt(vhat) + eps)
    return ps


def grad_check(
    loss_and_grads,
    ps: ParamSet,
    eps: float = 1e-6,
    limit: int = 10_000,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    loss_and_grads() must evaluate the model at the current parameters and
    return (scalar loss, {name: gradient array}). When the parameter count
    exceeds limit, a seeded random subset of coordinates is probed instead
    of the full sweep.
    """
    _, grads = loss_and_grads()
    coords = [
        (name, i) for name, p in sorted(ps.params.items()) for i in range(p.size)
    ]
    if not coords:
        return 0.0
    if len(coords) > limit:
        rng = np.random.default_rng(seed)
        picks = rng.choice(len(coords), size=limit, replace=False)
        coords = [coords[i] for i in picks]
    worst = 0.0
    for name, i in coords:
        p = ps.params[name]
        old = p.flat[i]
        p.flat[i] = old + eps
        lp, _ = loss_and_grads()
        p.flat[i] = old - eps
        lm, _ = loss_and_grads()
        p.flat[i] = old
        numeric = (lp - lm) / (2.0 * eps)
        analytic = grads[name].flat[i]
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, rel)
    return worst


# -------------------------------------------------------------- serialization


def save_tensors(path: str | os.PathLike, tensors: dict[str, np.ndarray]) -> None:
    """Versioned binary: magic, version u32, then (name, rank, dims u64, f64 LE) records."""
    with open(path, "wb") as fh:
        fh.write(DFNN_MAGIC)
        fh.write(struct.pack("<I", DFNN_VERSION))
        for name, arr in tensors.items():
            arr = np.asarray(arr, dtype=np.float64)
            nb = name.encode("utf-8")
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<I", arr.ndim))
            if arr.ndim:
                fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.astype("<f8").tobytes())


def _take(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) < n:
        raise TruncatedFile(f"expected {n} bytes for {what}")
    return data


def load_tensors(path: str | os.PathLike) -> dict[str, np.ndarray]:
    tensors: dict[str, np.ndarray] = {}
    with open(path, "rb") as fh:
        if fh.read(4) != DFNN_MAGIC:
            raise BadMagic(f"{path}: not a DFNN file")
        (version,) = struct.unpack("<I", _take(fh, 4, "version"))
        if version != DFNN_VERSION:
            raise BadMagic(f"{path}: unsupported version {version}")
        while True:
            head = fh.read(4)
            if not head:
                break
            if len(head) < 4:
                raise TruncatedFile("partial record header")
            (name_len,) = struct.unpack("<I", head)
            name = _take(fh, name_len, "tensor name").decode("utf-8")
            (rank,) = struct.unpack("<I", _take(fh, 4, "rank"))
            dims = struct.unpack(f"<{rank}Q", _take(fh, 8 * rank, "dims")) if rank else ()
            count = int(np.prod(dims, dtype=np.int64)) if rank else 1
            payload = _take(fh, 8 * count, f"payload of {name}")
            tensors[name] = np.frombuffer(payload, "<f8").reshape(dims).copy()
    return tensors
