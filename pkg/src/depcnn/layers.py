"""Dense layer primitives with exact analytic gradients.

Everything operates on plain float numpy arrays.  The four building blocks
(multichannel 1-D convolution over token rows, 1-max pooling, inverted
dropout, fully-connected softmax) each come with the backward pass needed
for hand-rolled backpropagation, plus Xavier initialization and Adam.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class NumericError(Exception):
    """A non-finite value where the math guarantees a finite one."""


def ensure_finite(value, what: str) -> None:
    if not np.all(np.isfinite(value)):
        raise NumericError(f"non-finite value in {what}")


def as_rng(seed_or_rng) -> np.random.Generator:
    """Accept either a seed or an already-built generator."""
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def xavier_init(rows: int, cols: int, seed: int) -> np.ndarray:
    """Uniform in [-L, L] with L = sqrt(6 / (rows + cols))."""
    if rows < 1 or cols < 1:
        raise ValueError(f"invalid shape ({rows}, {cols})")
    limit = np.sqrt(6.0 / (rows + cols))
    rng = np.random.default_rng(seed)
    return rng.uniform(-limit, limit, size=(rows, cols))


def _window_view(channel: np.ndarray, k: int, positions: int) -> np.ndarray:
    """Rows i..i+k-1 flattened, for the first ``positions`` start offsets."""
    length, width = channel.shape
    if k > length:
        raise ValueError(f"window {k} longer than channel ({length} rows)")
    view = sliding_window_view(channel, (k, width))[:, 0]
    return view.reshape(length - k + 1, k * width)[:positions]


def conv_forward(channels, filters, bias, k: int, valid_len: int):
    """ReLU convolution over token windows, summed across channels.

    ``channels`` are (max_len x d) matrices, ``filters`` one (k*d x F)
    matrix per channel, ``bias`` one shared F-vector.  Output rows cover the
    window start positions ``0 .. max(1, valid_len - k + 1) - 1``; a window
    running past ``valid_len`` reads the zero padding.

    Returns ``(out, cache)`` where ``cache`` feeds :func:`conv_backward`.
    """
    if not channels:
        raise ValueError("need at least one channel")
    if len(filters) != len(channels):
        raise ValueError(f"{len(channels)} channels but {len(filters)} filter banks")
    if valid_len < 1:
        raise ValueError(f"valid_len must be >= 1, got {valid_len}")
    shape = channels[0].shape
    n_filters = filters[0].shape[1]
    positions = max(1, valid_len - k + 1)
    pre = np.tile(np.asarray(bias, dtype=channels[0].dtype), (positions, 1))
    windows = []
    for channel, bank in zip(channels, filters):
        if channel.shape != shape:
            raise ValueError(f"channel shapes differ: {channel.shape} vs {shape}")
        if bank.shape != (k * shape[1], n_filters):
            raise ValueError(
                f"filter bank shape {bank.shape}, expected {(k * shape[1], n_filters)}"
            )
        win = _window_view(channel, k, positions)
        windows.append(win)
        pre += win @ bank
    out = np.maximum(pre, 0.0)
    cache = {"windows": windows, "pre": pre, "k": k, "rows": shape[0]}
    return out, cache


def conv_backward(d_out, filters, cache, need_input_grad: bool = False):
    """Gradients of :func:`conv_forward` w.r.t. filters, bias and optionally
    the input channels (overlap-added back onto token rows)."""
    d_pre = d_out * (cache["pre"] > 0)
    d_bias = d_pre.sum(axis=0)
    d_filters = [win.T @ d_pre for win in cache["windows"]]
    d_channels = None
    if need_input_grad:
        k = cache["k"]
        positions = d_pre.shape[0]
        d_channels = []
        for bank in filters:
            width = bank.shape[0] // k
            d_win = (d_pre @ bank.T).reshape(positions, k, width)
            d_ch = np.zeros((cache["rows"], width), dtype=d_pre.dtype)
            for j in range(k):
                d_ch[j : j + positions] += d_win[:, j, :]
            d_channels.append(d_ch)
    return d_filters, d_bias, d_channels


def max_pool(conv_out: np.ndarray):
    """Per-filter maximum over window positions; ties keep the smallest
    index so backprop routing is deterministic."""
    if conv_out.shape[0] < 1:
        raise ValueError("cannot pool over zero positions")
    argmax = conv_out.argmax(axis=0)
    pooled = conv_out[argmax, np.arange(conv_out.shape[1])]
    return pooled, argmax


def max_pool_backward(d_pooled, argmax, positions: int) -> np.ndarray:
    d_conv = np.zeros((positions, d_pooled.shape[0]), dtype=d_pooled.dtype)
    d_conv[argmax, np.arange(d_pooled.shape[0])] = d_pooled
    return d_conv


def dropout_forward(x, keep_prob: float, mode: str, rng):
    """Inverted dropout: kept components are scaled by 1/keep_prob during
    training; inference is the identity.  ``rng`` may be a generator or a
    seed."""
    if not 0.0 < keep_prob <= 1.0:
        raise ValueError(f"keep_prob must be in (0, 1], got {keep_prob}")
    if mode == "infer":
        return x, np.ones_like(x)
    if mode != "train":
        raise ValueError(f"unknown mode {mode!r}")
    mask = (as_rng(rng).random(x.shape) < keep_prob) / keep_prob
    mask = mask.astype(x.dtype)
    return x * mask, mask


def dropout_backward(d_out, mask) -> np.ndarray:
    return d_out * mask


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    exp = np.exp(shifted)
    return exp / exp.sum()


def fc_softmax_forward(m, weights, bias):
    """Affine map followed by a stable softmax; returns (probs, logits)."""
    if weights.shape[1] != m.shape[0] or weights.shape[0] != bias.shape[0]:
        raise ValueError(
            f"shape mismatch: W {weights.shape}, input {m.shape}, b {bias.shape}"
        )
    logits = weights @ m + bias
    return softmax(logits), logits


class AdamState:
    """First/second moment accumulators plus the step counter."""

    def __init__(
        self,
        learning_rate: float = 0.0007,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}


def adam_step(tensors: dict, grads: dict, state: AdamState) -> None:
    """One bias-corrected Adam update, applied in place."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    for name, param in tensors.items():
        grad = grads[name]
        if grad.shape != param.shape:
            raise ValueError(
                f"gradient shape {grad.shape} != parameter shape {param.shape} ({name})"
            )
        m = state.m.setdefault(name, np.zeros_like(param))
        v = state.v.setdefault(name, np.zeros_like(param))
        m *= b1
        m += (1.0 - b1) * grad
        v *= b2
        v += (1.0 - b2) * grad * grad
        m_hat = m / (1.0 - b1**state.t)
        v_hat = v / (1.0 - b2**state.t)
        param -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
