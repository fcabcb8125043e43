"""Dense matrix substrate: float32 storage, float64 accumulation.

A "matrix" throughout the engine is a plain numpy array that is 2-D,
C-contiguous, float32, and fully finite. ``as_matrix``/``as_vector`` enforce
those properties once at module boundaries; numerical kernels then upcast to
float64 for accumulation and round back to float32 for storage.
"""
from __future__ import annotations

from enum import Enum

import numpy as np

from .errors import DomainError, ShapeError

__all__ = [
    "Activation",
    "as_matrix",
    "as_vector",
    "matmul",
    "row_norms",
    "cosine_cost",
    "apply_activation",
]


def as_matrix(data, name: str = "matrix") -> np.ndarray:
    """Validate and convert ``data`` to a finite, C-contiguous float32 2-D array."""
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got {arr.ndim}-D")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite entries")
    return np.ascontiguousarray(arr)


def as_vector(data, name: str = "vector") -> np.ndarray:
    """Validate and convert ``data`` to a finite float64 1-D array."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got {arr.ndim}-D")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite entries")
    return np.ascontiguousarray(arr)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with float64 accumulation, rounded to float32 storage."""
    a = as_matrix(a, "left operand")
    b = as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return (a.astype(np.float64) @ b.astype(np.float64)).astype(np.float32)


def row_norms(a: np.ndarray) -> np.ndarray:
    """Euclidean norm of each row, computed in float64."""
    a = as_matrix(a, "matrix")
    return np.sqrt(np.einsum("ij,ij->i", a.astype(np.float64), a.astype(np.float64)))


def cosine_cost(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise cosine-distance cost matrix: out[k, n] = 1 - cos(a_k, b_n).

    Entries lie in [0, 2]. A zero-norm row on either side is assigned
    cosine 0, i.e. a neutral cost of 1, so degenerate rows never produce
    NaN and never look perfectly aligned.
    """
    a = as_matrix(a, "A")
    b = as_matrix(b, "B")
    if a.shape[1] != b.shape[1]:
        raise ShapeError(
            f"cosine_cost column mismatch: A has {a.shape[1]}, B has {b.shape[1]}"
        )
    a64 = a.astype(np.float64)
    b64 = b.astype(np.float64)
    an = np.sqrt(np.einsum("ij,ij->i", a64, a64))
    bn = np.sqrt(np.einsum("ij,ij->i", b64, b64))
    denom = np.outer(an, bn)
    # zero-norm rows give a zero numerator as well; avoid 0/0
    denom[denom == 0.0] = 1.0
    cos = np.clip((a64 @ b64.T) / denom, -1.0, 1.0)
    return (1.0 - cos).astype(np.float32)


class Activation(str, Enum):
    """Elementwise (or rowwise, for softmax) nonlinearity."""

    IDENTITY = "identity"
    RELU = "relu"
    SILU = "silu"
    GELU_TANH = "gelu_tanh"
    SOFTMAX_ROWS = "softmax_rows"

    @classmethod
    def parse(cls, value) -> "Activation":
        if isinstance(value, Activation):
            return value
        try:
            return cls(str(value))
        except ValueError:
            valid = ", ".join(m.value for m in cls)
            raise DomainError(f"unknown activation {value!r}; valid: {valid}") from None


def activate64(x: np.ndarray, kind: Activation) -> np.ndarray:
    """Apply ``kind`` to a float64 array (internal accumulation path)."""
    if kind is Activation.IDENTITY:
        return x
    if kind is Activation.RELU:
        return np.maximum(x, 0.0)
    if kind is Activation.SILU:
        return x / (1.0 + np.exp(-x))
    if kind is Activation.GELU_TANH:
        inner = np.sqrt(2.0 / np.pi) * (x + 0.044715 * x**3)
        return 0.5 * x * (1.0 + np.tanh(inner))
    if kind is Activation.SOFTMAX_ROWS:
        shifted = x - x.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)
    raise DomainError(f"unknown activation kind {kind!r}")


def apply_activation(m: np.ndarray, kind: Activation) -> np.ndarray:
    """Apply an activation to a matrix; same shape, float32 storage."""
    m = as_matrix(m, "matrix")
    kind = Activation.parse(kind)
    return activate64(m.astype(np.float64), kind).astype(np.float32)
