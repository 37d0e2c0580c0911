"""Dense tensor construction and the shape algebra the whole framework rests on.

Data moves through the framework as C-contiguous numpy arrays in row-major
order.  The helpers here pin down construction, dtype, and reshape rules once
so downstream modules never re-validate them.  float64 is the reference
numeric type; float32 is an opt-in storage mode (gradient-check tolerances
assume float64).
"""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

DEFAULT_DTYPE = np.float64
_ALLOWED_DTYPES = (np.float64, np.float32)


class _Shape4Base(NamedTuple):
    n: int
    c: int
    h: int
    w: int


class Shape4(_Shape4Base):
    """Canonical NCHW shape for image batches: all four dims strictly positive."""

    def __new__(cls, n: int, c: int, h: int, w: int) -> "Shape4":
        for name, value in zip(cls._fields, (n, c, h, w)):
            if int(value) < 1:
                raise ValueError(f"Shape4.{name} must be >= 1, got {value}")
        return super().__new__(cls, int(n), int(c), int(h), int(w))


def _checked_shape(shape: Sequence[int]) -> tuple[int, ...]:
    out = tuple(int(s) for s in shape)
    if not out:
        raise ValueError("shape must have at least one dimension")
    if any(s <= 0 for s in out):
        raise ValueError(f"shape dimensions must be positive, got {out}")
    return out


def tensor_new(shape: Sequence[int], data, dtype=DEFAULT_DTYPE) -> np.ndarray:
    """Build a row-major tensor of `shape` from flat `data`.

    Raises ValueError when product(shape) != len(data) or any dim is
    non-positive.  The result owns its memory and is C-contiguous.
    """
    if dtype not in _ALLOWED_DTYPES:
        raise ValueError(f"dtype must be float64 or float32, got {dtype}")
    shp = _checked_shape(shape)
    flat = np.array(data, dtype=dtype).reshape(-1)
    expected = math.prod(shp)
    if flat.size != expected:
        raise ValueError(
            f"shape {shp} needs {expected} elements, data has {flat.size}"
        )
    return np.ascontiguousarray(flat.reshape(shp))


def reshape(t: np.ndarray, new_shape: Sequence[int]) -> np.ndarray:
    """Reinterpret `t` with a new shape; the flat data order is untouched."""
    shp = _checked_shape(new_shape)
    expected = math.prod(shp)
    if t.size != expected:
        raise ValueError(
            f"cannot reshape {tuple(t.shape)} ({t.size} elements) "
            f"to {shp} ({expected} elements)"
        )
    return np.ascontiguousarray(t).reshape(shp)


def row_major_strides(shape: Sequence[int]) -> tuple[int, ...]:
    """Element strides for a row-major layout: stride_m = prod of trailing dims."""
    shp = _checked_shape(shape)
    strides = []
    acc = 1
    for dim in reversed(shp):
        strides.append(acc)
        acc *= dim
    return tuple(reversed(strides))
