"""Dense tensor container underlying every other module.

Tensors are rank 1..4, row-major, 32-bit reals by default, with the layout
convention (batch, channel, time, freq). A float64 mode exists solely for
high-precision gradient checking; all reductions accumulate in 64-bit
regardless of storage dtype. Tensors are immutable by convention: operations
return new tensors and never write through their inputs.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ShapeError

MAX_RANK = 4


class Tensor:
    """Dense rank-<=4 array of reals, contiguous row-major."""

    __slots__ = ("array",)

    def __init__(self, array) -> None:
        arr = np.asarray(array)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        arr = np.ascontiguousarray(arr)
        if arr.ndim < 1 or arr.ndim > MAX_RANK:
            raise ShapeError(f"rank must be 1..{MAX_RANK}, got {arr.ndim}")
        if any(extent < 1 for extent in arr.shape):
            raise ShapeError(f"all extents must be >= 1, got {arr.shape}")
        self.array = arr

    @property
    def shape(self) -> tuple[int, ...]:
        return self.array.shape

    @property
    def dtype(self):
        return self.array.dtype

    @property
    def size(self) -> int:
        return self.array.size

    @property
    def data(self) -> np.ndarray:
        """Flat row-major view of the values."""
        return self.array.reshape(-1)

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() needs a single value, shape is {self.shape}")
        return float(self.array.reshape(-1)[0])

    def tolist(self):
        return self.array.tolist()

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.array.astype(dtype))

    def copy(self) -> "Tensor":
        return Tensor(self.array.copy())

    def __getitem__(self, key):
        out = self.array[key]
        if np.ndim(out) == 0:
            return float(out)
        return Tensor(out)

    def __repr__(self) -> str:
        return f"Tensor(shape={list(self.shape)}, dtype={self.array.dtype.name})"

    # ---- elementwise ----

    def _coerce_operand(self, other) -> np.ndarray | float:
        if isinstance(other, Tensor):
            if other.size == 1:
                return float(other.array.reshape(-1)[0])
            if other.shape != self.shape:
                raise ShapeError(
                    f"operand shapes {self.shape} and {other.shape} differ; "
                    "only equal-shape and scalar broadcast are supported"
                )
            return other.array
        if np.isscalar(other):
            return float(other)
        raise ShapeError(f"unsupported operand type {type(other).__name__}")

    def add(self, other) -> "Tensor":
        return Tensor(self.array + self._coerce_operand(other))

    def mul(self, other) -> "Tensor":
        return Tensor(self.array * self._coerce_operand(other))

    def scale(self, factor: float) -> "Tensor":
        return Tensor(self.array * float(factor))

    # ---- reductions (64-bit accumulation) ----

    def _reduce(self, fn, axis, keepdims):
        if axis is not None and not (-self.array.ndim <= axis < self.array.ndim):
            raise ShapeError(f"axis {axis} out of range for shape {self.shape}")
        out = fn(axis, keepdims)
        out = np.asarray(out, dtype=self.array.dtype)
        if out.ndim == 0:
            out = out.reshape(1)
        return Tensor(out)

    def sum(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        return self._reduce(
            lambda a, k: np.sum(self.array, axis=a, keepdims=k, dtype=np.float64),
            axis,
            keepdims,
        )

    def mean(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        return self._reduce(
            lambda a, k: np.mean(self.array, axis=a, keepdims=k, dtype=np.float64),
            axis,
            keepdims,
        )

    def max_reduce(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        return self._reduce(
            lambda a, k: np.max(self.array, axis=a, keepdims=k), axis, keepdims
        )


def _check_shape(shape: Sequence[int]) -> tuple[int, ...]:
    shape = tuple(int(s) for s in shape)
    if len(shape) < 1 or len(shape) > MAX_RANK:
        raise ShapeError(f"rank must be 1..{MAX_RANK}, got {len(shape)}")
    if any(s < 1 for s in shape):
        raise ShapeError(f"all extents must be >= 1, got {shape}")
    return shape


def zeros(shape: Sequence[int], dtype=np.float32) -> Tensor:
    return Tensor(np.zeros(_check_shape(shape), dtype=dtype))


def full(shape: Sequence[int], value: float, dtype=np.float32) -> Tensor:
    return Tensor(np.full(_check_shape(shape), float(value), dtype=dtype))


def from_values(shape: Sequence[int], values, dtype=np.float32) -> Tensor:
    shape = _check_shape(shape)
    flat = np.asarray(values, dtype=dtype).reshape(-1)
    expected = int(np.prod(shape))
    if flat.size != expected:
        raise ShapeError(f"shape {shape} needs {expected} values, got {flat.size}")
    if not np.all(np.isfinite(flat)):
        raise ShapeError("values must be finite")
    return Tensor(flat.reshape(shape))
