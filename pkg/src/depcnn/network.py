"""Model assembly: multichannel convolutions, pooling, dropout, softmax.

The network runs, per window size, one ReLU convolution over both input
channels, 1-max pools each filter map, concatenates the pooled vectors in
ascending window order, applies dropout while training, and classifies with
a two-way softmax.  Logit index 0 is the positive (PPI) class.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import LABEL_OTHER, LABEL_PPI
from .features import EncodedInstance
from .layers import (
    NumericError,
    as_rng,
    conv_backward,
    conv_forward,
    dropout_forward,
    fc_softmax_forward,
    max_pool,
    max_pool_backward,
    xavier_init,
)

N_CLASSES = 2
PPI_INDEX = 0
OTHER_INDEX = 1


@dataclass
class ModelConfig:
    windows: tuple[int, ...] = (3,)
    filters_per_window: int = 400
    max_len: int = 160
    keep_prob: float = 0.5
    channels: int = 2
    d: int = 351
    emb_dim: int = 200
    train_embeddings: bool = False
    seed: int = 0
    precision: str = "f64"

    def __post_init__(self):
        self.windows = tuple(sorted(set(int(k) for k in self.windows)))
        if not self.windows:
            raise ValueError("need at least one window size")
        for k in self.windows:
            if not 1 <= k <= self.max_len:
                raise ValueError(f"window {k} outside 1..{self.max_len}")
        if self.filters_per_window < 1:
            raise ValueError("need at least one filter per window")
        if self.channels not in (1, 2):
            raise ValueError(f"channels must be 1 or 2, got {self.channels}")
        if not 0.0 < self.keep_prob <= 1.0:
            raise ValueError(f"keep_prob must be in (0, 1], got {self.keep_prob}")
        if self.d < 1:
            raise ValueError("row width d must be positive")
        if self.train_embeddings and not 0 < self.emb_dim <= self.d:
            raise ValueError("emb_dim must fit inside the row width")
        if self.precision not in ("f64", "f32"):
            raise ValueError(f"precision must be f64 or f32, got {self.precision}")

    @property
    def dtype(self):
        return np.float64 if self.precision == "f64" else np.float32

    @property
    def pooled_width(self) -> int:
        return self.filters_per_window * len(self.windows)


@dataclass
class ModelParams:
    """All trainable tensors, keyed per window and channel."""

    conv_w: dict[int, list[np.ndarray]]
    conv_b: dict[int, np.ndarray]
    fc_w: np.ndarray
    fc_b: np.ndarray
    embedding: np.ndarray | None = None

    def tensors(self) -> dict[str, np.ndarray]:
        """Stable name -> array view used by the optimizer and checkpoints."""
        out: dict[str, np.ndarray] = {}
        for k in sorted(self.conv_w):
            for c, w in enumerate(self.conv_w[k]):
                out[f"conv_w:k{k}:c{c}"] = w
            out[f"conv_b:k{k}"] = self.conv_b[k]
        out["fc_w"] = self.fc_w
        out["fc_b"] = self.fc_b
        if self.embedding is not None:
            out["embedding"] = self.embedding
        return out

    def copy(self) -> "ModelParams":
        return ModelParams(
            conv_w={k: [w.copy() for w in ws] for k, ws in self.conv_w.items()},
            conv_b={k: b.copy() for k, b in self.conv_b.items()},
            fc_w=self.fc_w.copy(),
            fc_b=self.fc_b.copy(),
            embedding=None if self.embedding is None else self.embedding.copy(),
        )


def init_model(config: ModelConfig, embedding: np.ndarray | None = None) -> ModelParams:
    """Xavier-initialized filters and FC weights, zero biases.

    Per-tensor seeds are derived from ``config.seed`` so the same seed always
    yields the same parameters.  ``embedding`` must be supplied (and is
    copied) when ``config.train_embeddings`` is set.
    """
    n_tensors = len(config.windows) * config.channels + 1
    seeds = np.random.SeedSequence(config.seed).generate_state(n_tensors)
    dtype = config.dtype
    conv_w: dict[int, list[np.ndarray]] = {}
    conv_b: dict[int, np.ndarray] = {}
    i = 0
    for k in config.windows:
        banks = []
        for _ in range(config.channels):
            banks.append(
                xavier_init(k * config.d, config.filters_per_window, int(seeds[i])).astype(dtype)
            )
            i += 1
        conv_w[k] = banks
        conv_b[k] = np.zeros(config.filters_per_window, dtype=dtype)
    fc_w = xavier_init(N_CLASSES, config.pooled_width, int(seeds[i])).astype(dtype)
    fc_b = np.zeros(N_CLASSES, dtype=dtype)
    emb = None
    if config.train_embeddings:
        if embedding is None:
            raise ValueError("train_embeddings requires an initial embedding matrix")
        emb = np.array(embedding, dtype=dtype)
    return ModelParams(conv_w=conv_w, conv_b=conv_b, fc_w=fc_w, fc_b=fc_b, embedding=emb)


def _instance_channels(inst: EncodedInstance, params, config) -> list[np.ndarray]:
    chans = [inst.channel1, inst.channel2][: config.channels]
    if not (config.train_embeddings and params.embedding is not None):
        return chans
    ids = [inst.word_ids1, inst.word_ids2][: config.channels]
    out = []
    for ch, id_row in zip(chans, ids):
        if id_row is None:
            raise ValueError(
                f"instance {inst.instance_id} lacks word ids; re-encode with a vocabulary"
            )
        ch = ch.copy()
        rows = id_row >= 0
        ch[rows, : config.emb_dim] = params.embedding[id_row[rows]]
        out.append(ch)
    return out


def forward(inst: EncodedInstance, params: ModelParams, config: ModelConfig,
            mode: str = "infer", rng=None):
    """One forward pass; returns (probabilities, cache for backprop).

    ``rng`` (a generator or a seed) is required in train mode for dropout.
    """
    if mode == "train" and rng is None:
        raise ValueError("training mode needs a random generator for dropout")
    if rng is not None:
        rng = as_rng(rng)
    channels = _instance_channels(inst, params, config)
    pooled_parts = []
    per_window = []
    for k in config.windows:
        conv_out, cache = conv_forward(
            channels, params.conv_w[k], params.conv_b[k], k, inst.valid_len
        )
        pooled, argmax = max_pool(conv_out)
        pooled_parts.append(pooled)
        per_window.append(
            {"k": k, "cache": cache, "argmax": argmax, "positions": conv_out.shape[0]}
        )
    m = np.concatenate(pooled_parts)
    dropped, mask = dropout_forward(m, config.keep_prob, mode, rng)
    probs, logits = fc_softmax_forward(dropped, params.fc_w, params.fc_b)
    cache = {
        "channels": channels,
        "per_window": per_window,
        "mask": mask,
        "dropped": dropped,
        "probs": probs,
        "logits": logits,
    }
    return probs, cache


def predict_proba(inst, params, config) -> np.ndarray:
    probs, _ = forward(inst, params, config, mode="infer")
    return probs


def predict(inst, params, config) -> str:
    """PPI iff its probability strictly exceeds OTHER's; ties go to OTHER."""
    probs = predict_proba(inst, params, config)
    return LABEL_PPI if probs[PPI_INDEX] > probs[OTHER_INDEX] else LABEL_OTHER


def _gold_index(label: str) -> int:
    return PPI_INDEX if label == LABEL_PPI else OTHER_INDEX


def _backward_into(grads, inst, params, config, cache, d_logits) -> None:
    grads["fc_w"] += np.outer(d_logits, cache["dropped"])
    grads["fc_b"] += d_logits
    d_m = (params.fc_w.T @ d_logits) * cache["mask"]
    need_input = config.train_embeddings and params.embedding is not None
    offset = 0
    n_filters = config.filters_per_window
    for entry in cache["per_window"]:
        k = entry["k"]
        d_pooled = d_m[offset : offset + n_filters]
        offset += n_filters
        d_conv = max_pool_backward(d_pooled, entry["argmax"], entry["positions"])
        d_filters, d_bias, d_channels = conv_backward(
            d_conv, params.conv_w[k], entry["cache"], need_input_grad=need_input
        )
        for c, d_w in enumerate(d_filters):
            grads[f"conv_w:k{k}:c{c}"] += d_w
        grads[f"conv_b:k{k}"] += d_bias
        if need_input:
            ids = [inst.word_ids1, inst.word_ids2][: config.channels]
            for id_row, d_ch in zip(ids, d_channels):
                rows = id_row >= 0
                np.add.at(
                    grads["embedding"], id_row[rows], d_ch[rows, : config.emb_dim]
                )


def loss_and_grads(batch, params: ModelParams, config: ModelConfig, rng):
    """Mean negative log-likelihood over a batch plus exact gradients.

    Dropout masks are drawn from ``rng`` per instance, so a caller that
    reseeds the generator replays the identical stochastic forward passes.
    """
    if not batch:
        raise ValueError("batch must be non-empty")
    rng = as_rng(rng)
    grads = {name: np.zeros_like(arr) for name, arr in params.tensors().items()}
    scale = 1.0 / len(batch)
    total = 0.0
    for inst in batch:
        probs, cache = forward(inst, params, config, mode="train", rng=rng)
        gold = _gold_index(inst.label)
        p_gold = probs[gold]
        if not np.isfinite(p_gold) or p_gold <= 0.0:
            raise NumericError(
                f"non-finite or zero probability for instance {inst.instance_id}"
            )
        total -= np.log(p_gold)
        d_logits = probs.copy()
        d_logits[gold] -= 1.0
        d_logits *= scale
        _backward_into(grads, inst, params, config, cache, d_logits)
    loss = float(total * scale)
    if not np.isfinite(loss):
        raise NumericError("non-finite batch loss")
    return loss, grads


def gradient_check(batch, params, config, dropout_seed: int = 0, h: float = 1e-5,
                   floor: float = 1e-3):
    """Max guarded relative error between analytic and central-difference
    gradients, per tensor.

    Every loss evaluation reseeds the dropout generator with the same seed,
    so both finite-difference probes and the analytic pass see identical
    masks.  The relative error is |a - n| / max(|a|, |n|, floor); the floor
    keeps finite-difference noise on near-zero gradients from dominating.
    """

    def batch_loss():
        rng = np.random.default_rng(dropout_seed)
        return loss_and_grads(batch, params, config, rng)[0]

    _, analytic = loss_and_grads(
        batch, params, config, np.random.default_rng(dropout_seed)
    )
    errors: dict[str, float] = {}
    for name, arr in params.tensors().items():
        worst = 0.0
        flat = arr.reshape(-1)
        grad_flat = analytic[name].reshape(-1)
        for idx in range(flat.size):
            original = flat[idx]
            flat[idx] = original + h
            loss_plus = batch_loss()
            flat[idx] = original - h
            loss_minus = batch_loss()
            flat[idx] = original
            numeric = (loss_plus - loss_minus) / (2.0 * h)
            denom = max(abs(grad_flat[idx]), abs(numeric), floor)
            worst = max(worst, abs(grad_flat[idx] - numeric) / denom)
        errors[name] = worst
    return errors


def reference_gradcheck_setup(seed: int = 0):
    """The small fixed configuration used by the gradient-fidelity check:
    max_len 12, row width 15, two channels, one window of size 3, 4 filters."""
    config = ModelConfig(
        windows=(3,),
        filters_per_window=4,
        max_len=12,
        keep_prob=0.5,
        channels=2,
        d=15,
        emb_dim=6,
        seed=seed,
    )
    rng = np.random.default_rng(seed)
    batch = []
    for i in range(3):
        valid = int(rng.integers(5, config.max_len + 1))
        ch1 = np.zeros((config.max_len, config.d))
        ch2 = np.zeros((config.max_len, config.d))
        ch1[:valid] = rng.normal(scale=0.5, size=(valid, config.d))
        ch2[:valid] = rng.normal(scale=0.5, size=(valid, config.d))
        batch.append(
            EncodedInstance(
                channel1=ch1,
                channel2=ch2,
                valid_len=valid,
                label=LABEL_PPI if i % 2 == 0 else LABEL_OTHER,
                instance_id=f"ref-{i}",
                doc_id="ref",
            )
        )
    params = init_model(config)
    return batch, params, config


def reference_gradient_check(seed: int = 0, h: float = 1e-5):
    """Run the gradient check on the reference small model."""
    batch, params, config = reference_gradcheck_setup(seed)
    return gradient_check(batch, params, config, dropout_seed=seed + 1, h=h)
