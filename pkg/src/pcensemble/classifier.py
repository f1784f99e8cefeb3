"""Compact point-set classifier with hand-written backpropagation.

Architecture: a per-point encoder (affine + rectifier per layer, shared
across points) lifts each 3D coordinate to an F-dimensional feature row,
a column-wise max pool collapses the point axis into one F-vector, and an
affine head maps it to class logits. The max pool makes predictions exactly
invariant to point permutation and duplication.

Training is mini-batch gradient descent with a cosine-annealed learning
rate. Gradients flow analytically through the head, the max pool (routed to
the argmax point per feature column, lowest index on ties) and the encoder;
everything runs in double precision so finite-difference checks have
headroom.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import FormatError, NonFiniteLossError
from .geometry import as_cloud
from .seeding import substream

CHECKPOINT_MAGIC = b"EPIC"
CHECKPOINT_VERSION = 1
INPUT_DIM = 3


@dataclass
class Layer:
    """One affine layer: weights (fan_in, fan_out) and bias (fan_out,)."""

    weights: np.ndarray
    bias: np.ndarray


@dataclass
class PointSetModel:
    """Per-point encoder layers plus pooled classification head."""

    encoder: list[Layer]
    head: list[Layer]

    @property
    def feature_dim(self) -> int:
        return self.encoder[-1].bias.size

    @property
    def n_classes(self) -> int:
        return self.head[-1].bias.size

    def layers(self) -> list[Layer]:
        return self.encoder + self.head


@dataclass
class ModelGrads:
    """Gradient structure congruent to PointSetModel."""

    encoder: list[Layer]
    head: list[Layer]

    def layers(self) -> list[Layer]:
        return self.encoder + self.head


@dataclass
class TrainConfig:
    epochs: int = 60
    batch_size: int = 32
    learning_rate: float = 5e-4
    optimizer: str = "adam"  # "adam" or "sgd"
    momentum: float = 0.0  # only used by the sgd optimizer
    seed: int = 0
    augment: bool = True

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")


def new_model(
    n_classes: int,
    encoder_widths: Sequence[int] = (64, 128),
    head_widths: Sequence[int] = (64,),
    seed: int = 0,
) -> PointSetModel:
    """Freshly initialized model; weights uniform in +-1/sqrt(fan_in)."""
    if n_classes < 2:
        raise ValueError(f"need at least 2 classes, got {n_classes}")
    feature_dim = encoder_widths[-1]
    if feature_dim < n_classes:
        warnings.warn(
            f"feature dim {feature_dim} < class count {n_classes}; "
            "consider widening the encoder",
            stacklevel=2,
        )
    rng = substream(seed, "init")

    def make(widths_in: int, widths: Sequence[int]) -> list[Layer]:
        layers = []
        fan_in = widths_in
        for width in widths:
            lim = 1.0 / np.sqrt(fan_in)
            layers.append(
                Layer(
                    weights=rng.uniform(-lim, lim, size=(fan_in, width)),
                    bias=rng.uniform(-lim, lim, size=width),
                )
            )
            fan_in = width
        return layers

    encoder = make(INPUT_DIM, encoder_widths)
    head = make(feature_dim, list(head_widths) + [n_classes])
    return PointSetModel(encoder, head)


def _forward_stack(model: PointSetModel, x: np.ndarray) -> dict:
    """Forward pass on a (B, N, 3) stack, keeping caches for backprop."""
    enc_pre, enc_acts = [], [x]
    h = x
    for layer in model.encoder:
        z = h @ layer.weights + layer.bias
        enc_pre.append(z)
        h = np.maximum(z, 0.0)
        enc_acts.append(h)
    features = h  # (B, N, F)
    argmax = np.argmax(features, axis=1)  # (B, F); first max = lowest index
    pooled = np.take_along_axis(features, argmax[:, None, :], axis=1)[:, 0, :]

    head_pre, head_acts = [], [pooled]
    g = pooled
    last = len(model.head) - 1
    for i, layer in enumerate(model.head):
        z = g @ layer.weights + layer.bias
        head_pre.append(z)
        g = z if i == last else np.maximum(z, 0.0)
        head_acts.append(g)
    logits = g
    shifted = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(shifted)
    norm = expz.sum(axis=1, keepdims=True)
    probs = expz / norm
    return {
        "enc_pre": enc_pre,
        "enc_acts": enc_acts,
        "features": features,
        "argmax": argmax,
        "pooled": pooled,
        "head_pre": head_pre,
        "head_acts": head_acts,
        "shifted": shifted,
        "log_norm": np.log(norm[:, 0]),
        "probs": probs,
    }


def forward(model: PointSetModel, points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (per-point features (N, F), pooled F-vector, class probabilities)."""
    pts = as_cloud(points)
    cache = _forward_stack(model, pts[None])
    return cache["features"][0], cache["pooled"][0], cache["probs"][0]


def pointwise_features(model: PointSetModel, points) -> np.ndarray:
    """Per-point feature matrix (N, F), as produced by the encoder."""
    return forward(model, points)[0]


def predict_batch(model: PointSetModel, stack: np.ndarray) -> np.ndarray:
    """Class probabilities (B, C) for a stack (B, N, 3) of equal-size clouds."""
    return _forward_stack(model, np.asarray(stack, dtype=np.float64))["probs"]


def _backward_stack(
    model: PointSetModel, cache: dict, labels: np.ndarray, denom: int
) -> tuple[float, ModelGrads]:
    """Cross-entropy loss share and gradients for one forward cache.

    The loss and gradients are divided by `denom`, so summing results over
    sub-batches with a shared denom yields the exact batch mean.
    """
    b = labels.shape[0]
    rows = np.arange(b)
    loss = float(np.sum(cache["log_norm"] - cache["shifted"][rows, labels]) / denom)

    dlogits = cache["probs"].copy()
    dlogits[rows, labels] -= 1.0
    dlogits /= denom

    head_grads: list[Layer] = [None] * len(model.head)  # type: ignore[list-item]
    d = dlogits
    last = len(model.head) - 1
    for i in reversed(range(len(model.head))):
        dz = d if i == last else d * (cache["head_pre"][i] > 0)
        head_grads[i] = Layer(cache["head_acts"][i].T @ dz, dz.sum(axis=0))
        d = dz @ model.head[i].weights.T

    # Route the pooled gradient to each feature's argmax point.
    dfeatures = np.zeros_like(cache["features"])
    np.put_along_axis(dfeatures, cache["argmax"][:, None, :], d[:, None, :], axis=1)

    enc_grads: list[Layer] = [None] * len(model.encoder)  # type: ignore[list-item]
    d = dfeatures
    for i in reversed(range(len(model.encoder))):
        dz = d * (cache["enc_pre"][i] > 0)
        fan_in = model.encoder[i].weights.shape[0]
        fan_out = model.encoder[i].weights.shape[1]
        enc_grads[i] = Layer(
            cache["enc_acts"][i].reshape(-1, fan_in).T @ dz.reshape(-1, fan_out),
            dz.sum(axis=(0, 1)),
        )
        d = dz @ model.encoder[i].weights.T
    return loss, ModelGrads(enc_grads, head_grads)


def _accumulate(into: ModelGrads, grads: ModelGrads) -> None:
    for dst, src in zip(into.layers(), grads.layers()):
        dst.weights += src.weights
        dst.bias += src.bias


def loss_and_gradients(
    model: PointSetModel, batch: Sequence[tuple[np.ndarray, int]]
) -> tuple[float, ModelGrads]:
    """Mean cross-entropy over a batch of (points, label) pairs, with gradients.

    Clouds of equal size are stacked and processed in one pass; mixed sizes
    fall back to per-sample accumulation with identical arithmetic.
    """
    if not batch:
        raise ValueError("batch is empty")
    total = len(batch)
    sizes = {pts.shape[0] for pts, _ in batch}
    if len(sizes) == 1:
        stack = np.stack([np.asarray(p, dtype=np.float64) for p, _ in batch])
        labels = np.asarray([lab for _, lab in batch], dtype=np.intp)
        return _backward_stack(model, _forward_stack(model, stack), labels, total)

    loss = 0.0
    acc: ModelGrads | None = None
    for pts, lab in batch:
        x = np.asarray(pts, dtype=np.float64)[None]
        part_loss, part = _backward_stack(
            model, _forward_stack(model, x), np.asarray([lab], dtype=np.intp), total
        )
        loss += part_loss
        if acc is None:
            acc = part
        else:
            _accumulate(acc, part)
    assert acc is not None
    return loss, acc


def cosine_lr(lr0: float, t: int, total: int) -> float:
    """Cosine-annealed learning rate; reaches exactly zero at t == total."""
    return lr0 * 0.5 * (1.0 + np.cos(np.pi * t / total))


def sgd_step(model: PointSetModel, grads: ModelGrads, lr: float,
             velocity: ModelGrads | None = None, momentum: float = 0.0) -> None:
    """In-place descent step, optionally with classical momentum."""
    if velocity is None or momentum == 0.0:
        for layer, g in zip(model.layers(), grads.layers()):
            layer.weights -= lr * g.weights
            layer.bias -= lr * g.bias
        return
    for layer, g, v in zip(model.layers(), grads.layers(), velocity.layers()):
        v.weights *= momentum
        v.weights += g.weights
        v.bias *= momentum
        v.bias += g.bias
        layer.weights -= lr * v.weights
        layer.bias -= lr * v.bias


@dataclass
class AdamState:
    """First/second moment buffers plus step counter."""

    m: ModelGrads
    v: ModelGrads
    t: int = 0


def adam_step(
    model: PointSetModel,
    grads: ModelGrads,
    lr: float,
    state: AdamState,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """In-place Adam update with bias correction."""
    state.t += 1
    bc1 = 1.0 - beta1**state.t
    bc2 = 1.0 - beta2**state.t
    for layer, g, m, v in zip(
        model.layers(), grads.layers(), state.m.layers(), state.v.layers()
    ):
        for attr in ("weights", "bias"):
            p = getattr(layer, attr)
            grad = getattr(g, attr)
            m_buf = getattr(m, attr)
            v_buf = getattr(v, attr)
            m_buf *= beta1
            m_buf += (1.0 - beta1) * grad
            v_buf *= beta2
            v_buf += (1.0 - beta2) * grad * grad
            p -= lr * (m_buf / bc1) / (np.sqrt(v_buf / bc2) + eps)


def zero_grads_like(model: PointSetModel) -> ModelGrads:
    return ModelGrads(
        [Layer(np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in model.encoder],
        [Layer(np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in model.head],
    )


def make_update_fn(model: PointSetModel, config: TrainConfig):
    """Bind the configured optimizer's state to a (grads, lr) -> None step."""
    if config.optimizer == "adam":
        state = AdamState(zero_grads_like(model), zero_grads_like(model))
        return lambda grads, lr: adam_step(model, grads, lr, state)
    velocity = zero_grads_like(model) if config.momentum else None
    return lambda grads, lr: sgd_step(model, grads, lr, velocity, config.momentum)


def train(
    model: PointSetModel,
    dataset: Sequence[tuple[np.ndarray, int]],
    config: TrainConfig,
    loss_log: list[float] | None = None,
) -> PointSetModel:
    """Train in place on (points, label) pairs; returns the same model.

    Shuffling and augmentation draws come from a sub-stream of config.seed,
    so identical configs produce bit-identical parameters. When enabled,
    each visit re-augments its cloud with random anisotropic scaling in
    [2/3, 3/2] and translation in [-0.2, 0.2].
    """
    from .data import augment

    if not dataset:
        raise ValueError("dataset is empty")
    rng = substream(config.seed, "train")
    update = make_update_fn(model, config)
    n = len(dataset)
    for epoch in range(config.epochs):
        lr = cosine_lr(config.learning_rate, epoch, config.epochs)
        order = rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for lo in range(0, n, config.batch_size):
            batch = []
            for i in order[lo : lo + config.batch_size]:
                pts, lab = dataset[i]
                if config.augment:
                    pts = augment(pts, rng)
                batch.append((pts, lab))
            loss, grads = loss_and_gradients(model, batch)
            if not np.isfinite(loss):
                raise NonFiniteLossError(
                    f"non-finite loss {loss} at epoch {epoch}, batch {n_batches}, lr {lr:.3e}"
                )
            update(grads, lr)
            epoch_loss += loss
            n_batches += 1
        if loss_log is not None:
            loss_log.append(epoch_loss / n_batches)
    return model


def save_checkpoint(model: PointSetModel, path) -> None:
    """Write magic, version, width descriptor and float64 parameters."""
    from .data import write_bytes_atomic

    parts = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION)]
    enc_widths = [layer.bias.size for layer in model.encoder]
    head_widths = [layer.bias.size for layer in model.head]
    parts.append(struct.pack("<I", len(enc_widths)))
    parts.append(struct.pack(f"<{len(enc_widths)}I", *enc_widths))
    parts.append(struct.pack("<I", len(head_widths)))
    parts.append(struct.pack(f"<{len(head_widths)}I", *head_widths))
    for layer in model.layers():
        parts.append(np.ascontiguousarray(layer.weights, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())
    write_bytes_atomic(path, b"".join(parts))


def load_checkpoint(path) -> PointSetModel:
    """Read a checkpoint, validating structure byte by byte."""
    with open(path, "rb") as fh:
        blob = fh.read()

    offset = 0

    def take(count: int, what: str) -> bytes:
        nonlocal offset
        if offset + count > len(blob):
            raise FormatError(
                f"truncated checkpoint at offset {offset}: "
                f"needed {count} bytes for {what}, have {len(blob) - offset}"
            )
        chunk = blob[offset : offset + count]
        offset += count
        return chunk

    magic = take(4, "magic")
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"bad magic {magic!r} at offset 0, expected {CHECKPOINT_MAGIC!r}")
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version} at offset 4")

    def take_widths(what: str) -> list[int]:
        (count,) = struct.unpack("<I", take(4, f"{what} layer count"))
        if count < 1:
            raise FormatError(f"{what} layer count must be >= 1 at offset {offset - 4}")
        return list(struct.unpack(f"<{count}I", take(4 * count, f"{what} widths")))

    enc_widths = take_widths("encoder")
    head_widths = take_widths("head")

    fan_in = INPUT_DIM
    stacks: list[list[Layer]] = []
    for widths in (enc_widths, head_widths):
        layers = []
        for width in widths:
            w = np.frombuffer(take(8 * fan_in * width, "weights"), dtype="<f8")
            b = np.frombuffer(take(8 * width, "bias"), dtype="<f8")
            layers.append(
                Layer(w.reshape(fan_in, width).astype(np.float64), b.astype(np.float64))
            )
            fan_in = width
        stacks.append(layers)
    if offset != len(blob):
        raise FormatError(f"trailing {len(blob) - offset} bytes at offset {offset}")
    return PointSetModel(stacks[0], stacks[1])
