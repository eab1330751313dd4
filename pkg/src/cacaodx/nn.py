"""Layer math, model container and forward/backward passes.

Every layer operation exists as a plain-array function so callers
(the trainer, the gradient checker, tests) can feed either float32 or
float64. `relu`, `softmax_op`, `avg_pool2d` and `conv2d` additionally
accept and return Tensor values for the public surface.

Models are immutable after construction: forward and backward never
mutate weights, so one model is safe to share across threads.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .arch import ArchSpec, LayerSpec
from .errors import (
    InvalidLabelError,
    InvalidShapeError,
    InvalidValueError,
    ModelValidationError,
    ShapeMismatchError,
)
from .tensor import Tensor

CE_EPSILON = 1e-12


def _unwrap(x):
    return x.array if isinstance(x, Tensor) else np.asarray(x)


def _rewrap(result, like):
    return Tensor(result) if isinstance(like, Tensor) else result


def relu(x):
    """max(0, x) elementwise; shape preserved."""
    arr = _unwrap(x)
    return _rewrap(np.maximum(arr, 0), x)


def relu_backward(x, d_out):
    return d_out * (x > 0)


def softmax_op(logits):
    """Map N logits to N probabilities summing to 1 (max-subtracted)."""
    arr = _unwrap(logits)
    if arr.ndim != 1:
        raise InvalidShapeError(f"softmax expects a rank-1 tensor, got shape {arr.shape}")
    return _rewrap(_softmax_rows(arr.reshape(1, -1))[0], logits)


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    if not np.isfinite(z).all():
        raise InvalidValueError("softmax input contains NaN or Inf")
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def avg_pool2d(x, window: int, stride: int | None = None):
    """Average pooling over an NCHW batch."""
    arr = _unwrap(x)
    stride = window if stride is None else stride
    if arr.ndim != 4:
        raise InvalidShapeError(f"avg_pool2d expects NCHW input, got shape {arr.shape}")
    if window < 1 or stride < 1:
        raise InvalidShapeError("window and stride must be >= 1")
    if window > arr.shape[2] or window > arr.shape[3]:
        raise InvalidShapeError(
            f"window {window} exceeds spatial extent {arr.shape[2]}x{arr.shape[3]}"
        )
    return _rewrap(kernels.avgpool_forward(arr, window, stride), x)


def conv2d(x, layer: LayerSpec, weights, bias):
    """Cross-correlation plus bias for an NCHW batch."""
    arr = _unwrap(x)
    w = _unwrap(weights)
    b = _unwrap(bias)
    if arr.ndim != 4:
        raise InvalidShapeError(f"conv2d expects NCHW input, got shape {arr.shape}")
    if arr.shape[1] != w.shape[1]:
        raise ShapeMismatchError(
            f"input has {arr.shape[1]} channels, weights expect {w.shape[1]}"
        )
    return _rewrap(kernels.conv2d_forward(arr, w, b, layer.stride, layer.pad_amount()), x)


def cross_entropy(probs, label: int) -> float:
    """-ln p[label] with the probability clamped at 1e-12."""
    arr = _unwrap(probs)
    if arr.ndim != 1:
        raise InvalidShapeError(f"cross_entropy expects a rank-1 tensor, got {arr.shape}")
    if not 0 <= int(label) < arr.shape[0]:
        raise InvalidLabelError(f"label {label} out of range for {arr.shape[0]} classes")
    return float(-np.log(max(float(arr[int(label)]), CE_EPSILON)))


def _param_names(arch: ArchSpec) -> list[tuple[int, str]]:
    """(layer index, parameter prefix) for every parametric layer."""
    out = []
    for idx, spec in enumerate(arch.layers):
        if spec.kind in ("conv2d", "dense"):
            out.append((idx, f"{spec.kind}{idx}"))
    return out


def _param_shapes(arch: ArchSpec) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    walk = arch.shape_walk()
    in_shape: tuple[int, ...] = (arch.input_channels, arch.input_size, arch.input_size)
    for idx, spec in enumerate(arch.layers):
        if spec.kind == "conv2d":
            shapes[f"conv2d{idx}.weight"] = (
                spec.out_channels, in_shape[0], spec.kernel_size, spec.kernel_size,
            )
            shapes[f"conv2d{idx}.bias"] = (spec.out_channels,)
        elif spec.kind == "dense":
            shapes[f"dense{idx}.weight"] = (spec.out_features, in_shape[0])
            shapes[f"dense{idx}.bias"] = (spec.out_features,)
        in_shape = walk[idx]
    return shapes


class Model:
    """An architecture plus one weight and one bias per parametric layer."""

    def __init__(self, arch: ArchSpec, weights: dict) -> None:
        expected = _param_shapes(arch)
        named = {}
        for name, value in weights.items():
            named[name] = np.ascontiguousarray(_unwrap(value))
        missing = sorted(set(expected) - set(named))
        surplus = sorted(set(named) - set(expected))
        if missing or surplus:
            raise ModelValidationError(
                f"weight names disagree with the architecture"
                f" (missing {missing}, surplus {surplus})"
            )
        for name, shape in expected.items():
            if tuple(named[name].shape) != shape:
                raise ModelValidationError(
                    f"{name} has shape {named[name].shape}, architecture needs {shape}"
                )
        dtypes = {a.dtype for a in named.values()}
        if len(dtypes) > 1:
            raise ModelValidationError(f"mixed weight dtypes: {sorted(map(str, dtypes))}")
        self.arch = arch
        self.weights = named
        self.dtype = named[next(iter(named))].dtype if named else np.float32

    @classmethod
    def initialize(cls, arch: ArchSpec, seed: int = 0, dtype=np.float32) -> "Model":
        """He-initialized weights, zero biases, deterministic per seed."""
        rng = np.random.default_rng(seed)
        weights: dict[str, np.ndarray] = {}
        for name, shape in _param_shapes(arch).items():
            if name.endswith(".bias"):
                weights[name] = np.zeros(shape, dtype=dtype)
            else:
                fan_in = int(np.prod(shape[1:]))
                std = np.sqrt(2.0 / fan_in)
                weights[name] = (rng.standard_normal(shape) * std).astype(dtype)
        return cls(arch, weights)

    def tensors(self) -> dict[str, Tensor]:
        """The weights as float32 Tensor values (copying if float64)."""
        return {k: Tensor(v) for k, v in self.weights.items()}

    def astype(self, dtype) -> "Model":
        return Model(self.arch, {k: v.astype(dtype) for k, v in self.weights.items()})

    def copy(self) -> "Model":
        return Model(self.arch, {k: v.copy() for k, v in self.weights.items()})

    def num_parameters(self) -> int:
        return sum(int(v.size) for v in self.weights.values())

    def forward(self, batch):
        return forward(self, batch)


def _check_batch(arch: ArchSpec, batch: np.ndarray) -> None:
    if batch.ndim != 4:
        raise ShapeMismatchError(f"forward expects an NCHW batch, got shape {batch.shape}")
    n, c, h, w = batch.shape
    if c != arch.input_channels or h != arch.input_size or w != arch.input_size:
        raise ShapeMismatchError(
            f"batch is {c}x{h}x{w}, architecture expects"
            f" {arch.input_channels}x{arch.input_size}x{arch.input_size}"
        )


def _run_layers(model: Model, batch: np.ndarray, keep: bool):
    """Forward pass; when keep=True also returns per-layer input caches."""
    x = batch
    caches: list = []
    for idx, spec in enumerate(model.arch.layers):
        caches.append(x if keep else None)
        if spec.kind == "conv2d":
            w = model.weights[f"conv2d{idx}.weight"]
            b = model.weights[f"conv2d{idx}.bias"]
            x = kernels.conv2d_forward(x, w, b, spec.stride, spec.pad_amount())
        elif spec.kind == "relu":
            x = np.maximum(x, 0)
        elif spec.kind == "avgpool":
            x = kernels.avgpool_forward(x, spec.window, spec.stride)
        elif spec.kind == "flatten":
            x = x.reshape(x.shape[0], -1)
        elif spec.kind == "dense":
            w = model.weights[f"dense{idx}.weight"]
            b = model.weights[f"dense{idx}.bias"]
            x = x @ w.T + b
        elif spec.kind == "softmax":
            x = _softmax_rows(x)
    return x, caches


def forward(model: Model, batch):
    """Per-sample class probabilities for an NCHW batch; rows sum to 1."""
    arr = _unwrap(batch).astype(model.dtype, copy=False)
    _check_batch(model.arch, arr)
    probs, _ = _run_layers(model, arr, keep=False)
    return _rewrap(probs, batch)


def loss_and_gradients(model: Model, batch, labels):
    """Mean cross-entropy over the batch plus gradients for every parameter.

    The gradient of the loss w.r.t. the softmax-layer logits is
    (probs - one_hot(label)) / batch_size, and everything upstream is
    plain reverse-mode chaining through the layer caches.
    """
    arr = _unwrap(batch).astype(model.dtype, copy=False)
    _check_batch(model.arch, arr)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1 or labels.shape[0] != arr.shape[0]:
        raise ShapeMismatchError(
            f"{labels.shape} labels for a batch of {arr.shape[0]} samples"
        )
    n_classes = len(model.arch.labels)
    if labels.min() < 0 or labels.max() >= n_classes:
        raise InvalidLabelError(
            f"label index out of range for {n_classes} classes: {labels.tolist()}"
        )

    probs, caches = _run_layers(model, arr, keep=True)
    n = arr.shape[0]
    picked = np.clip(probs[np.arange(n), labels], CE_EPSILON, None)
    loss = float(-np.log(picked).mean())

    one_hot = np.zeros_like(probs)
    one_hot[np.arange(n), labels] = 1
    grad = (probs - one_hot) / np.asarray(n, dtype=probs.dtype)

    grads: dict[str, np.ndarray] = {}
    for idx in range(len(model.arch.layers) - 1, -1, -1):
        spec = model.arch.layers[idx]
        cached = caches[idx]
        if spec.kind == "softmax":
            continue  # folded into the (probs - one_hot) term above
        if spec.kind == "dense":
            w = model.weights[f"dense{idx}.weight"]
            grads[f"dense{idx}.weight"] = grad.T @ cached
            grads[f"dense{idx}.bias"] = grad.sum(axis=0)
            grad = grad @ w
        elif spec.kind == "flatten":
            grad = grad.reshape(cached.shape)
        elif spec.kind == "avgpool":
            grad = kernels.avgpool_backward(cached.shape, spec.window, spec.stride, grad)
        elif spec.kind == "relu":
            grad = relu_backward(cached, grad)
        elif spec.kind == "conv2d":
            w = model.weights[f"conv2d{idx}.weight"]
            grad, d_w, d_b = kernels.conv2d_backward(
                cached, w, spec.stride, spec.pad_amount(), grad
            )
            grads[f"conv2d{idx}.weight"] = d_w
            grads[f"conv2d{idx}.bias"] = d_b
    return loss, probs, grads


def backward(model: Model, batch, labels) -> dict[str, np.ndarray]:
    """Named gradients of the mean cross-entropy loss, one per parameter."""
    _, _, grads = loss_and_gradients(model, batch, labels)
    return grads
