"""Dense float32 tensors and the arithmetic primitives used by both passes.

A tensor here is a read-only, C-contiguous float32 ndarray with rank >= 1 and
every extent >= 1. Row-major layout is fixed so that the binary formats in
:mod:`vrel.model_io` are unambiguous. Operations always allocate fresh
outputs; frozen arrays are safe to share between concurrent readers.
"""

from __future__ import annotations

from typing import Iterable, NamedTuple

import numpy as np

from .errors import AxisError, ShapeError

# The universal value type for activations, weights and relevance.
Tensor = np.ndarray

ELEMENTWISE_OPS = ("add", "sub", "mul", "div_stabilized")


def as_tensor(values, shape: Iterable[int] | None = None) -> Tensor:
    """Build a frozen float32 tensor from array-like data.

    Copies unless ``values`` is already a frozen float32 C-contiguous array.
    Scalars become rank-1 tensors of length 1.
    """
    arr = np.asarray(values, dtype=np.float32)
    if shape is not None:
        try:
            arr = arr.reshape(tuple(int(e) for e in shape))
        except ValueError as exc:
            raise ShapeError(str(exc)) from None
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.size == 0:
        raise ShapeError(f"tensor extents must all be >= 1, got shape {arr.shape}")
    out = np.ascontiguousarray(arr)
    if isinstance(values, np.ndarray) and values.flags.writeable \
            and np.shares_memory(out, values):
        # never freeze (or alias) a buffer the caller still owns
        out = out.copy()
    out.flags.writeable = False
    return out


def freeze(arr: np.ndarray) -> Tensor:
    """Mark an array we own as read-only, without copying."""
    arr.flags.writeable = False
    return arr


def zeros(shape: Iterable[int]) -> Tensor:
    return freeze(np.zeros(tuple(shape), dtype=np.float32))


class SignParts(NamedTuple):
    positive: Tensor
    negative: Tensor


def split_signs(a: Tensor) -> SignParts:
    """Split into max(a, 0) and min(a, 0); the parts sum back to ``a``."""
    return SignParts(freeze(np.maximum(a, 0.0)), freeze(np.minimum(a, 0.0)))


def stabilized(denom: np.ndarray, eps: float) -> np.ndarray:
    """Move a denominator away from zero: d + sign(d) * eps, sign(0) = +1."""
    return denom + np.where(denom >= 0.0, np.float32(eps), np.float32(-eps))


def elementwise(op: str, a: Tensor, b: Tensor, eps: float = 0.0) -> Tensor:
    """Componentwise add/sub/mul, or stabilized division a / (b + sign(b)*eps)."""
    if a.shape != b.shape:
        raise ShapeError(f"elementwise {op}: shapes {a.shape} and {b.shape} differ")
    if eps < 0:
        raise ValueError("eps must be >= 0")
    if op == "add":
        out = a + b
    elif op == "sub":
        out = a - b
    elif op == "mul":
        out = a * b
    elif op == "div_stabilized":
        out = a / stabilized(np.asarray(b), eps)
    else:
        raise ValueError(f"unknown op {op!r}, expected one of {ELEMENTWISE_OPS}")
    return freeze(np.asarray(out, dtype=np.float32))


def reduce_sum(a: Tensor, axes: Iterable[int] | None = None) -> Tensor:
    """Sum over ``axes`` (all axes if None), removing the reduced extents.

    Accumulates in float64 to bound drift, then rounds back to float32.
    Reducing every axis yields a length-1 tensor.
    """
    if axes is None:
        axis: tuple[int, ...] = tuple(range(a.ndim))
    else:
        axis = tuple(int(ax) for ax in axes)
        seen = set()
        for ax in axis:
            if not -a.ndim <= ax < a.ndim:
                raise AxisError(f"axis {ax} out of range for rank {a.ndim}")
            key = ax % a.ndim
            if key in seen:
                raise AxisError(f"axis {ax} given more than once")
            seen.add(key)
    out = np.sum(a, axis=axis, dtype=np.float64).astype(np.float32)
    if out.ndim == 0:
        out = out.reshape(1)
    return freeze(out)
