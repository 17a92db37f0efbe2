"""Dense float64 tensor.

A tensor is a row-major array of 64-bit floats with rank >= 1; scalars are
represented as rank-1 tensors of extent 1. Construction validates that every
element is finite, so any operation that would produce NaN or infinity fails
loudly instead of propagating poison values.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import NonFiniteError, ShapeError


class Tensor:

    __slots__ = ("array",)

    def __init__(self, values, dims: Sequence[int] | None = None):
        arr = np.asarray(values, dtype=np.float64)
        if dims is not None:
            expected = int(np.prod(dims))
            if arr.size != expected:
                raise ShapeError(
                    f"cannot shape {arr.size} values into dims {tuple(dims)}"
                )
            arr = arr.reshape(tuple(dims))
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("tensor contains non-finite values")
        self.array = np.ascontiguousarray(arr)

    # -- constructors --------------------------------------------------------

    @classmethod
    def zeros(cls, dims: Sequence[int]) -> "Tensor":
        return cls(np.zeros(tuple(dims), dtype=np.float64))

    @classmethod
    def full(cls, dims: Sequence[int], value: float) -> "Tensor":
        return cls(np.full(tuple(dims), value, dtype=np.float64))

    @classmethod
    def scalar(cls, value: float) -> "Tensor":
        return cls(np.array([value], dtype=np.float64))

    # -- views ----------------------------------------------------------------

    @property
    def dims(self) -> tuple[int, ...]:
        return self.array.shape

    @property
    def rank(self) -> int:
        return self.array.ndim

    @property
    def data(self) -> np.ndarray:
        """Flat row-major view of the elements."""
        return self.array.reshape(-1)

    def item(self) -> float:
        if self.array.size != 1:
            raise ShapeError(f"item() on tensor of dims {self.dims}")
        return float(self.array.reshape(-1)[0])

    def copy(self) -> "Tensor":
        return Tensor(self.array.copy())

    def __repr__(self) -> str:
        return f"Tensor(dims={self.dims})"
