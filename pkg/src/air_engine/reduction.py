"""Prototype-based condensation of token matrices.

The prototype is the mean token; tokens are ranked by Euclidean distance from
it and the most distinctive ones are retained. Distances are computed in
float64 so that ordering near ties is stable, and retained rows keep their
original sequence order.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .matrix import as_matrix

__all__ = ["ReducedTokens", "compute_prototype", "select_top_q", "clamp_top_q"]


@dataclass(frozen=True)
class ReducedTokens:
    selected_indices: tuple[int, ...]  # ascending original row indices
    h_prime: np.ndarray  # (Q, d) float32, rows copied bit-exactly
    prototype: np.ndarray  # (d,) float64
    distances: np.ndarray  # (K,) float64 distance of every input row


def compute_prototype(tokens) -> np.ndarray:
    """Mean row of the token matrix, in float64."""
    t = as_matrix(tokens, "tokens")
    if t.shape[0] == 0:
        raise ParameterError("cannot compute a prototype of zero tokens")
    return t.astype(np.float64).mean(axis=0)


def select_top_q(tokens, q: int) -> ReducedTokens:
    """Retain the ``q`` rows farthest (L2) from the prototype.

    Ties are broken toward the smaller original index, and the retained rows
    appear in their original order, not distance order.
    """
    t = as_matrix(tokens, "tokens")
    k = t.shape[0]
    if not 1 <= q <= k:
        raise ParameterError(f"top_q must be in [1, {k}], got {q}")

    prototype = compute_prototype(t)
    diff = t.astype(np.float64) - prototype
    distances = np.sqrt(np.einsum("ij,ij->i", diff, diff))

    # lexsort: primary key descending distance, secondary ascending index
    ranking = np.lexsort((np.arange(k), -distances))
    selected = tuple(sorted(int(i) for i in ranking[:q]))
    return ReducedTokens(
        selected_indices=selected,
        h_prime=t[list(selected)],
        prototype=prototype,
        distances=distances,
    )


def clamp_top_q(q: int, available: int) -> int:
    """Clamp a configured Top-Q to the token count, warning when it shrinks."""
    if q > available:
        warnings.warn(
            f"top_q={q} exceeds the {available} available tokens; clamping",
            stacklevel=2,
        )
        return available
    return q
