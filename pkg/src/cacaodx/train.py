"""Supervised training: augmentation, oversampling, SGD, early stopping.

The loop is deterministic for a fixed (architecture, data, config):
weight init, batch order, augmentation variants and oversampling all
derive from cfg.seed, updates are plain SGD, and the returned model is
the snapshot from the best validation epoch (earliest epoch on ties).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .arch import ArchSpec
from .errors import ConfigurationError, DivergenceError, EmptyClassError, InvalidValueError
from .nn import Model, cross_entropy, forward, loss_and_gradients  # noqa: F401  (cross_entropy is part of this surface)
from .tensor import Tensor

AUGMENT_FLAGS = ("hflip", "rotate15", "brightness20")

# Variant tags are the unit rebalancing cycles through; augment() picks
# one per flag with the seed, rebalancing may use any of them.
VARIANTS_BY_FLAG = {
    "hflip": ("hflip",),
    "rotate15": ("rotate+15", "rotate-15"),
    "brightness20": ("brightness0.8", "brightness1.2"),
}


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 16
    max_epochs: int = 30
    patience: int = 3
    seed: int = 0
    augmentation: frozenset = frozenset(AUGMENT_FLAGS)
    rebalance: bool = True

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigurationError("batch_size and max_epochs must be >= 1")
        if not 0 <= self.patience <= self.max_epochs:
            raise ConfigurationError("patience must lie in [0, max_epochs]")
        object.__setattr__(self, "augmentation", frozenset(self.augmentation))
        unknown = self.augmentation - set(AUGMENT_FLAGS)
        if unknown:
            raise ConfigurationError(f"unknown augmentation flags: {sorted(unknown)}")


@dataclass
class EpochStats:
    epoch: int
    train_acc: float
    val_acc: float
    train_loss: float


@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)
    best_epoch: int = 0

    def to_csv(self) -> str:
        lines = ["epoch,train_acc,val_acc,train_loss"]
        for s in self.epochs:
            lines.append(f"{s.epoch},{s.train_acc:.6f},{s.val_acc:.6f},{s.train_loss:.6f}")
        return "\n".join(lines) + "\n"

    def by_epoch(self, epoch: int) -> EpochStats:
        return self.epochs[epoch - 1]


class EarlyStopping:
    """Track the best validation epoch and decide when to halt.

    Halts once (current epoch - best epoch) reaches the patience;
    ties keep the earliest best epoch.
    """

    def __init__(self, patience: int) -> None:
        self.patience = patience
        self.best_epoch = 0
        self.best_value = -math.inf

    def update(self, epoch: int, value: float) -> bool:
        if value > self.best_value:
            self.best_value = value
            self.best_epoch = epoch
            return True
        return False

    def should_stop(self, epoch: int) -> bool:
        return epoch - self.best_epoch >= self.patience


def replay_early_stopping(values, patience: int) -> tuple[int, int]:
    """Run the stopping rule over a validation-accuracy curve.

    Returns (halt epoch, best epoch); the curve is 1-indexed by position.
    """
    stopper = EarlyStopping(patience)
    epoch = 0
    for epoch, value in enumerate(values, start=1):
        stopper.update(epoch, value)
        if stopper.should_stop(epoch):
            break
    return epoch, stopper.best_epoch


def _as_chw(image) -> np.ndarray:
    arr = image.array if isinstance(image, Tensor) else np.asarray(image)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ConfigurationError(f"expected a 3-channel CHW image, got shape {arr.shape}")
    return arr


def hflip(image):
    arr = _as_chw(image)
    out = np.ascontiguousarray(arr[:, :, ::-1])
    return Tensor(out) if isinstance(image, Tensor) else out


def rotate(image, degrees: float):
    """Rotate about the image center, bilinear, edge-clamped fill."""
    arr = _as_chw(image)
    c, h, w = arr.shape
    theta = math.radians(degrees)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    dy, dx = ys - cy, xs - cx
    sy = cos_t * dy + sin_t * dx + cy
    sx = -sin_t * dy + cos_t * dx + cx
    y0 = np.floor(sy).astype(np.int64)
    x0 = np.floor(sx).astype(np.int64)
    fy = (sy - y0).astype(arr.dtype)
    fx = (sx - x0).astype(arr.dtype)
    y0c, y1c = np.clip(y0, 0, h - 1), np.clip(y0 + 1, 0, h - 1)
    x0c, x1c = np.clip(x0, 0, w - 1), np.clip(x0 + 1, 0, w - 1)
    out = (
        arr[:, y0c, x0c] * (1 - fy) * (1 - fx)
        + arr[:, y1c, x0c] * fy * (1 - fx)
        + arr[:, y0c, x1c] * (1 - fy) * fx
        + arr[:, y1c, x1c] * fy * fx
    ).astype(arr.dtype)
    return Tensor(out) if isinstance(image, Tensor) else out


def brightness(image, factor: float):
    arr = _as_chw(image)
    out = np.clip(arr * arr.dtype.type(factor), 0.0, 1.0)
    return Tensor(out) if isinstance(image, Tensor) else out


def apply_variant(image, tag: str):
    if tag == "hflip":
        return hflip(image)
    if tag.startswith("rotate"):
        return rotate(image, float(tag[len("rotate"):]))
    if tag.startswith("brightness"):
        return brightness(image, float(tag[len("brightness"):]))
    raise ConfigurationError(f"unknown augmentation variant {tag!r}")


def augment(image, flags, seed: int = 0):
    """The original image followed by one variant per enabled flag.

    The seed decides the rotation direction and whether brightness goes
    up or down; flags are applied in a fixed canonical order so the
    result is fully determined by (image, flags, seed).
    """
    flags = frozenset(flags)
    unknown = flags - set(AUGMENT_FLAGS)
    if unknown:
        raise ConfigurationError(f"unknown augmentation flags: {sorted(unknown)}")
    rng = np.random.default_rng(seed)
    out = [image.copy() if isinstance(image, Tensor) else np.array(image, copy=True)]
    for flag in AUGMENT_FLAGS:
        if flag not in flags:
            continue
        variants = VARIANTS_BY_FLAG[flag]
        tag = variants[int(rng.integers(len(variants)))]
        out.append(apply_variant(image, tag))
    return out


def _digest(arr: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(arr, dtype=np.float32).tobytes()).hexdigest()


def _oversample(samples: list, rng: np.random.Generator, flags: frozenset) -> list:
    """Grow every class to the majority count by cycling augmented copies."""
    by_label: dict[int, list[int]] = {}
    for i, (_, label) in enumerate(samples):
        by_label.setdefault(int(label), []).append(i)
    if not by_label:
        return samples
    target = max(len(v) for v in by_label.values())
    variants = [v for f in AUGMENT_FLAGS if f in flags for v in VARIANTS_BY_FLAG[f]]
    extra = []
    for label in sorted(by_label):
        indices = by_label[label]
        if not indices:
            raise EmptyClassError(f"class {label} has no samples")
        for k in range(target - len(indices)):
            image, lab = samples[indices[k % len(indices)]]
            if variants:
                tag = variants[int(rng.integers(len(variants)))]
                image = apply_variant(image, tag)
            else:
                image = np.array(image, copy=True)
            extra.append((image, lab))
    return samples + extra


def _accuracy(model: Model, x: np.ndarray, y: np.ndarray, batch_size: int) -> float:
    hits = 0
    for start in range(0, len(x), batch_size):
        probs = forward(model, x[start : start + batch_size])
        hits += int((probs.argmax(axis=1) == y[start : start + batch_size]).sum())
    return hits / len(x)


def train(arch: ArchSpec, train_set, val_set, cfg: TrainConfig) -> tuple[Model, TrainHistory]:
    """Train from scratch and return the best-validation-epoch snapshot.

    train_set and val_set are sequences of (CHW image in [0,1], label
    index) pairs and must be disjoint.
    """
    train_samples = [(np.asarray(img.array if isinstance(img, Tensor) else img,
                                 dtype=np.float32), int(lab)) for img, lab in train_set]
    val_samples = [(np.asarray(img.array if isinstance(img, Tensor) else img,
                               dtype=np.float32), int(lab)) for img, lab in val_set]
    if not train_samples or not val_samples:
        raise ConfigurationError("training and validation sets must be non-empty")
    n_classes = len(arch.labels)
    for _, lab in train_samples + val_samples:
        if not 0 <= lab < n_classes:
            raise ConfigurationError(f"label index {lab} outside the {n_classes} classes")
    val_digests = {_digest(img) for img, _ in val_samples}
    if any(_digest(img) in val_digests for img, _ in train_samples):
        raise ConfigurationError("training and validation sets overlap")

    rng = np.random.default_rng(cfg.seed)
    if cfg.rebalance:
        train_samples = _oversample(train_samples, rng, cfg.augmentation)
    if cfg.augmentation:
        seeds = rng.integers(0, 2**63, size=len(train_samples))
        expanded = []
        for (img, lab), s in zip(train_samples, seeds):
            expanded.extend((v, lab) for v in augment(img, cfg.augmentation, int(s)))
        train_samples = expanded

    x_train = np.stack([img for img, _ in train_samples]).astype(np.float32)
    y_train = np.asarray([lab for _, lab in train_samples], dtype=np.int64)
    x_val = np.stack([img for img, _ in val_samples]).astype(np.float32)
    y_val = np.asarray([lab for _, lab in val_samples], dtype=np.int64)

    model = Model.initialize(arch, seed=cfg.seed)
    stopper = EarlyStopping(cfg.patience)
    history = TrainHistory()
    best_weights = {k: v.copy() for k, v in model.weights.items()}
    lr = np.float32(cfg.learning_rate)

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(x_train))
        hits = 0
        loss_sum = 0.0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            batch, labels = x_train[idx], y_train[idx]
            try:
                loss, probs, grads = loss_and_gradients(model, batch, labels)
            except InvalidValueError as exc:
                # exploded weights surface as non-finite logits inside softmax
                raise DivergenceError(f"non-finite loss at epoch {epoch}") from exc
            if not math.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            hits += int((probs.argmax(axis=1) == labels).sum())
            loss_sum += loss * len(idx)
            for name, grad in grads.items():
                model.weights[name] -= lr * grad
        val_acc = _accuracy(model, x_val, y_val, cfg.batch_size)
        history.epochs.append(EpochStats(
            epoch, hits / len(order), val_acc, loss_sum / len(order)
        ))
        if stopper.update(epoch, val_acc):
            best_weights = {k: v.copy() for k, v in model.weights.items()}
        if stopper.should_stop(epoch):
            break

    history.best_epoch = stopper.best_epoch
    return Model(arch, best_weights), history
