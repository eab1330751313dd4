"""Architecture descriptions and compound scaling.

An ArchSpec is an ordered layer stack plus the square input resolution,
channel count and class labels. It has a canonical one-layer-per-line
text form (the first line describes the input) which is embedded in the
model container and usable as a config file:

    input res=64 channels=3
    conv2d out=16 k=3 stride=1 pad=same
    relu
    avgpool window=2 stride=2
    flatten
    dense out=3
    softmax

Compound scaling grows depth, width and resolution together from a
single coefficient phi, with per-axis multipliers alpha, beta, gamma.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

from .errors import ConfigurationError, InvalidShapeError, ResourceLimitError, ShapeMismatchError

LAYER_KINDS = ("conv2d", "relu", "avgpool", "flatten", "dense", "softmax")

# Resource-doubling band for alpha * beta^2 * gamma^2; leaving it is a
# warning, not an error, because the knobs are operator configuration.
SCALING_CONSTRAINT = (1.8, 2.2)

DEFAULT_RESOLUTION_CAP = 512


@dataclass(frozen=True)
class LayerSpec:
    """One layer of the stack; only the fields for its kind are set."""

    kind: str
    out_channels: int | None = None   # conv2d
    kernel_size: int | None = None    # conv2d
    stride: int = 1                   # conv2d / avgpool
    padding: str = "same"             # conv2d: "same" or "none"
    window: int | None = None         # avgpool
    out_features: int | None = None   # dense

    def __post_init__(self) -> None:
        if self.kind not in LAYER_KINDS:
            raise ConfigurationError(f"unknown layer kind {self.kind!r}")
        if self.stride < 1:
            raise InvalidShapeError(f"{self.kind}: stride must be >= 1")
        if self.kind == "conv2d":
            if not self.out_channels or self.out_channels < 1:
                raise InvalidShapeError("conv2d: out_channels must be >= 1")
            if not self.kernel_size or self.kernel_size < 1:
                raise InvalidShapeError("conv2d: kernel_size must be >= 1")
            if self.padding not in ("same", "none"):
                raise ConfigurationError(f"conv2d: padding must be same or none, not {self.padding!r}")
            if self.padding == "same" and self.kernel_size % 2 == 0:
                raise ConfigurationError("conv2d: same padding requires an odd kernel size")
        elif self.kind == "avgpool":
            if not self.window or self.window < 1:
                raise InvalidShapeError("avgpool: window must be >= 1")
        elif self.kind == "dense":
            if not self.out_features or self.out_features < 1:
                raise InvalidShapeError("dense: out_features must be >= 1")

    def pad_amount(self) -> int:
        if self.kind != "conv2d":
            return 0
        return (self.kernel_size - 1) // 2 if self.padding == "same" else 0

    def to_line(self) -> str:
        if self.kind == "conv2d":
            return (
                f"conv2d out={self.out_channels} k={self.kernel_size}"
                f" stride={self.stride} pad={self.padding}"
            )
        if self.kind == "avgpool":
            return f"avgpool window={self.window} stride={self.stride}"
        if self.kind == "dense":
            return f"dense out={self.out_features}"
        return self.kind


def conv(out_channels: int, kernel_size: int = 3, stride: int = 1, padding: str = "same") -> LayerSpec:
    return LayerSpec("conv2d", out_channels=out_channels, kernel_size=kernel_size,
                     stride=stride, padding=padding)


def relu() -> LayerSpec:
    return LayerSpec("relu")


def avgpool(window: int = 2, stride: int | None = None) -> LayerSpec:
    return LayerSpec("avgpool", window=window, stride=window if stride is None else stride)


def flatten() -> LayerSpec:
    return LayerSpec("flatten")


def dense(out_features: int) -> LayerSpec:
    return LayerSpec("dense", out_features=out_features)


def softmax_layer() -> LayerSpec:
    return LayerSpec("softmax")


@dataclass(frozen=True)
class ArchSpec:
    """Layer stack + square input resolution + ordered class labels."""

    layers: tuple[LayerSpec, ...]
    input_size: int
    input_channels: int = 3
    labels: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "labels", tuple(self.labels))
        if self.input_size < 1 or self.input_channels < 1:
            raise InvalidShapeError("input resolution and channels must be >= 1")
        if not self.labels:
            raise ConfigurationError("an architecture needs at least one class label")
        if not self.layers or self.layers[-1].kind != "softmax":
            raise ConfigurationError("the final layer must be softmax")
        for spec in self.layers[:-1]:
            if spec.kind == "softmax":
                raise ConfigurationError("softmax may appear only as the final layer")
        denses = [s for s in self.layers if s.kind == "dense"]
        if not denses:
            raise ConfigurationError("an architecture needs a dense classifier layer")
        if denses[-1].out_features != len(self.labels):
            raise ConfigurationError(
                f"final dense emits {denses[-1].out_features} features"
                f" but there are {len(self.labels)} labels"
            )
        self.shape_walk()  # raises if consecutive layers are incompatible

    def shape_walk(self) -> list[tuple[int, ...]]:
        """Output shape after every layer, starting from (C, H, W)."""
        shape: tuple[int, ...] = (self.input_channels, self.input_size, self.input_size)
        out = []
        for idx, spec in enumerate(self.layers):
            where = f"layer {idx} ({spec.kind})"
            if spec.kind == "conv2d":
                if len(shape) != 3:
                    raise ShapeMismatchError(f"{where}: needs a CHW input, got {shape}")
                c, h, w = shape
                p = spec.pad_amount()
                if h + 2 * p < spec.kernel_size or w + 2 * p < spec.kernel_size:
                    raise InvalidShapeError(f"{where}: kernel {spec.kernel_size} exceeds input {h}x{w}")
                ho = (h + 2 * p - spec.kernel_size) // spec.stride + 1
                wo = (w + 2 * p - spec.kernel_size) // spec.stride + 1
                shape = (spec.out_channels, ho, wo)
            elif spec.kind == "avgpool":
                if len(shape) != 3:
                    raise ShapeMismatchError(f"{where}: needs a CHW input, got {shape}")
                c, h, w = shape
                if spec.window > h or spec.window > w:
                    raise InvalidShapeError(f"{where}: window {spec.window} exceeds input {h}x{w}")
                shape = (c, (h - spec.window) // spec.stride + 1, (w - spec.window) // spec.stride + 1)
            elif spec.kind == "flatten":
                shape = (int(math.prod(shape)),)
            elif spec.kind == "dense":
                if len(shape) != 1:
                    raise ShapeMismatchError(f"{where}: needs a flat input, got {shape}")
                shape = (spec.out_features,)
            elif spec.kind in ("relu", "softmax"):
                pass
            out.append(shape)
        return out

    def to_text(self) -> str:
        lines = [f"input res={self.input_size} channels={self.input_channels}"]
        lines.extend(spec.to_line() for spec in self.layers)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, labels: tuple[str, ...] | list[str]) -> "ArchSpec":
        layers: list[LayerSpec] = []
        input_size = input_channels = None
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            kind, *pairs = line.split()
            kv = {}
            for pair in pairs:
                key, _, value = pair.partition("=")
                if not _:
                    raise ConfigurationError(f"malformed arch line: {raw!r}")
                kv[key] = value
            if kind == "input":
                input_size = int(kv["res"])
                input_channels = int(kv.get("channels", 3))
            elif kind == "conv2d":
                layers.append(conv(int(kv["out"]), int(kv.get("k", 3)),
                                   int(kv.get("stride", 1)), kv.get("pad", "same")))
            elif kind == "avgpool":
                layers.append(avgpool(int(kv["window"]), int(kv.get("stride", kv["window"]))))
            elif kind == "dense":
                layers.append(dense(int(kv["out"])))
            elif kind in ("relu", "flatten", "softmax"):
                layers.append(LayerSpec(kind))
            else:
                raise ConfigurationError(f"unknown arch line kind {kind!r}")
        if input_size is None:
            raise ConfigurationError("arch text is missing the input line")
        return cls(tuple(layers), input_size, input_channels, tuple(labels))


def cacaonet_b0(labels: tuple[str, ...] | list[str], input_size: int = 64) -> ArchSpec:
    """The unscaled base network: three conv/relu/pool stages and a
    dense softmax classifier, small enough to train on a CPU in minutes."""
    labels = tuple(labels)
    layers = (
        conv(16), relu(), avgpool(2),
        conv(32), relu(), avgpool(2),
        conv(64), relu(), avgpool(2),
        flatten(), dense(len(labels)), softmax_layer(),
    )
    return ArchSpec(layers, input_size, 3, labels)


@dataclass(frozen=True)
class CompoundScalingConfig:
    """Joint depth/width/resolution scaling knobs.

    phi is the compound coefficient; alpha, beta, gamma are the per-unit
    multipliers for depth, width and resolution. Defaults follow the
    published grid-searched values for this scaling style; phi defaults
    to 0 (no scaling).
    """

    phi: float = 0.0
    alpha: float = 1.2
    beta: float = 1.1
    gamma: float = 1.15
    resolution_cap: int = field(default=DEFAULT_RESOLUTION_CAP)

    def __post_init__(self) -> None:
        if self.phi < 0:
            raise ConfigurationError("phi must be non-negative")
        if min(self.alpha, self.beta, self.gamma) < 1.0:
            raise ConfigurationError("alpha, beta and gamma must be >= 1")
        lo, hi = SCALING_CONSTRAINT
        product = self.constraint_product()
        if not lo <= product <= hi:
            warnings.warn(
                f"alpha*beta^2*gamma^2 = {product:.4f} is outside [{lo}, {hi}];"
                " scaling no longer roughly doubles cost per unit phi",
                stacklevel=2,
            )

    def constraint_product(self) -> float:
        return self.alpha * self.beta**2 * self.gamma**2


def _round_to_multiple(value: float, multiple: int, minimum: int) -> int:
    # Round half up, then clamp to the minimum.
    return max(minimum, int(math.floor(value / multiple + 0.5)) * multiple)


def _round_to_even(value: float) -> int:
    return _round_to_multiple(value, 2, 2)


def scale_arch(base: ArchSpec, cfg: CompoundScalingConfig) -> ArchSpec:
    """Compound-scale a base architecture.

    Depth: the total count of conv blocks (a conv2d plus its activation)
    grows by alpha^phi, rounded up; extra repeats are inserted after the
    existing blocks, deepest stage first, keeping that stage's width.
    Width: every conv2d out_channels grows by beta^phi, rounded half up
    to the nearest multiple of 4 (minimum 4).
    Resolution: the input resolution grows by gamma^phi, rounded to the
    nearest even integer; past cfg.resolution_cap this is an error.
    Labels and the dense classifier are unchanged.
    """
    if cfg.phi == 0:
        return base

    new_res = _round_to_even(base.input_size * cfg.gamma**cfg.phi)
    if new_res > cfg.resolution_cap:
        raise ResourceLimitError(
            f"scaled resolution {new_res} exceeds the cap {cfg.resolution_cap}"
        )

    width_mult = cfg.beta**cfg.phi

    # A "block" is a conv2d and the relu that follows it.
    blocks = [i for i, s in enumerate(base.layers)
              if s.kind == "conv2d" and i + 1 < len(base.layers) and base.layers[i + 1].kind == "relu"]
    target_depth = math.ceil(len(blocks) * cfg.alpha**cfg.phi) if blocks else 0
    extra = {i: 0 for i in blocks}
    remaining = target_depth - len(blocks)
    while remaining > 0:
        for i in reversed(blocks):
            if remaining == 0:
                break
            extra[i] += 1
            remaining -= 1

    layers: list[LayerSpec] = []
    for i, spec in enumerate(base.layers):
        if spec.kind != "conv2d":
            layers.append(spec)
            continue
        width = _round_to_multiple(spec.out_channels * width_mult, 4, 4)
        scaled = replace(spec, out_channels=width)
        layers.append(scaled)
        if i in extra and extra[i]:
            layers.append(relu())
            repeat = conv(width, spec.kernel_size, 1, "same")
            for _ in range(extra[i] - 1):
                layers.append(repeat)
                layers.append(relu())
            layers.append(repeat)
            # the original relu that follows `spec` closes the last repeat
    return ArchSpec(tuple(layers), new_res, base.input_channels, base.labels)
