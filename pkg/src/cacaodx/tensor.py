"""Dense float32 tensors and the handful of primitives built on them.

Values are row-major, rank at most 4 (batch, channel, height, width),
32-bit floats throughout. Operations never mutate their inputs.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import InvalidShapeError, ShapeMismatchError

DTYPE = np.float32
MAX_RANK = 4


def _check_shape(shape: Sequence[int]) -> tuple[int, ...]:
    shape = tuple(int(s) for s in shape)
    if len(shape) > MAX_RANK:
        raise InvalidShapeError(f"rank {len(shape)} exceeds maximum {MAX_RANK}")
    for extent in shape:
        if extent < 1:
            raise InvalidShapeError(f"extent {extent} in shape {shape} must be >= 1")
    return shape


class Tensor:
    """A dense float32 array; an empty shape means a scalar."""

    __slots__ = ("array",)

    def __init__(self, values) -> None:
        arr = np.asarray(values, dtype=DTYPE)
        _check_shape(arr.shape)
        if arr.ndim > 0:  # ascontiguousarray would promote 0-d to (1,)
            arr = np.ascontiguousarray(arr)
        self.array = arr

    @property
    def shape(self) -> tuple[int, ...]:
        return self.array.shape

    @property
    def rank(self) -> int:
        return self.array.ndim

    @property
    def size(self) -> int:
        return int(self.array.size)

    @property
    def data(self) -> np.ndarray:
        """Flat row-major view of the values."""
        return self.array.reshape(-1)

    def item(self) -> float:
        return float(self.array.reshape(-1)[0]) if self.size == 1 else self._not_scalar()

    def _not_scalar(self) -> float:
        raise InvalidShapeError(f"item() needs a single-element tensor, got shape {self.shape}")

    def copy(self) -> "Tensor":
        return Tensor(self.array.copy())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Tensor)
            and self.shape == other.shape
            and np.array_equal(self.array, other.array)
        )

    __hash__ = None  # mutable payload; not hashable

    def allclose(self, other: "Tensor", atol: float = 1e-6) -> bool:
        return self.shape == other.shape and np.allclose(self.array, other.array, atol=atol)


def zeros(shape: Sequence[int]) -> Tensor:
    return Tensor(np.zeros(_check_shape(shape), dtype=DTYPE))


def ones(shape: Sequence[int]) -> Tensor:
    return Tensor(np.ones(_check_shape(shape), dtype=DTYPE))


def zeros_like(t: Tensor) -> Tensor:
    return Tensor(np.zeros(t.shape, dtype=DTYPE))


def from_values(shape: Sequence[int], flat: Sequence[float]) -> Tensor:
    shape = _check_shape(shape)
    flat = np.asarray(flat, dtype=DTYPE)
    expected = int(np.prod(shape)) if shape else 1
    if flat.size != expected:
        raise InvalidShapeError(f"{flat.size} values cannot fill shape {shape} ({expected} slots)")
    return Tensor(flat.reshape(shape))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Standard rank-2 matrix product [m,k] x [k,n] -> [m,n]."""
    if a.rank != 2 or b.rank != 2:
        raise ShapeMismatchError(f"matmul needs rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"inner dimensions differ: {a.shape} x {b.shape}")
    return Tensor(a.array @ b.array)


def _binary(a: Tensor, b, op) -> Tensor:
    # Scalars broadcast against any tensor; tensors must match shape exactly.
    if isinstance(b, (int, float)):
        return Tensor(op(a.array, DTYPE(b)))
    if a.shape != b.shape:
        raise ShapeMismatchError(f"elementwise shapes differ: {a.shape} vs {b.shape}")
    return Tensor(op(a.array, b.array))


def add(a: Tensor, b) -> Tensor:
    return _binary(a, b, np.add)


def mul(a: Tensor, b) -> Tensor:
    return _binary(a, b, np.multiply)


def scale(t: Tensor, factor: float) -> Tensor:
    return Tensor(t.array * DTYPE(factor))


def map_values(t: Tensor, fn: Callable[[float], float]) -> Tensor:
    """Apply a scalar function to every entry; shape preserved."""
    out = np.fromiter((fn(float(v)) for v in t.data), dtype=DTYPE, count=t.size)
    return Tensor(out.reshape(t.shape))
