"""Feed-forward pass with additive visual re-injection and layer gating.

The plain FFN is phi(H W1) W2^T. Re-injection adds phi(H Z~^T) Z~, built from
the fused patch tokens, either at every sequence row (all_rows) or only at the
retained visual-token positions (retained_rows). When the gate is closed, the
selection is empty, or the mode is off, the output is byte-identical to the
plain FFN.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ShapeError
from .matrix import Activation, activate64, as_matrix
from .reduction import ReducedTokens

__all__ = [
    "InjectionMode",
    "FfnWeights",
    "InjectionConfig",
    "ffn_forward",
    "injection_term",
    "reinject_full",
    "air_ffn_forward",
    "weights_from_seed",
]


class InjectionMode(str, Enum):
    ALL_ROWS = "all_rows"
    RETAINED_ROWS = "retained_rows"
    OFF = "off"


@dataclass(frozen=True)
class FfnWeights:
    w1: np.ndarray  # (d, d_ff) float32
    w2: np.ndarray  # (d, d_ff) float32, applied transposed
    activation: Activation


@dataclass(frozen=True)
class InjectionConfig:
    mode: InjectionMode = InjectionMode.ALL_ROWS
    activation: Activation = Activation.SILU
    layer_gate: tuple[int, int] = (26, 32)  # inclusive, 1-indexed

    def gate_contains(self, layer: int) -> bool:
        return self.layer_gate[0] <= layer <= self.layer_gate[1]


def ffn_forward(h, weights: FfnWeights) -> np.ndarray:
    """Two-layer feed-forward: phi(H W1) W2^T, float64 accumulation."""
    h = as_matrix(h, "hidden states")
    w1 = as_matrix(weights.w1, "w1")
    w2 = as_matrix(weights.w2, "w2")
    if h.shape[1] != w1.shape[0]:
        raise ShapeError(f"hidden width {h.shape[1]} != w1 rows {w1.shape[0]}")
    if w1.shape[1] != w2.shape[1]:
        raise ShapeError(f"w1 cols {w1.shape[1]} != w2 cols {w2.shape[1]}")
    inner = activate64(h.astype(np.float64) @ w1.astype(np.float64), weights.activation)
    return (inner @ w2.astype(np.float64).T).astype(np.float32)


def injection_term(rows, fused, activation: Activation) -> np.ndarray:
    """The additive term phi(rows Z~^T) Z~, returned in float64."""
    rows = as_matrix(rows, "rows")
    fused = as_matrix(fused, "fused tokens")
    if fused.shape[0] and rows.shape[1] != fused.shape[1]:
        raise ShapeError(
            f"fused width {fused.shape[1]} != hidden width {rows.shape[1]}"
        )
    if fused.shape[0] == 0:
        return np.zeros(rows.shape, dtype=np.float64)
    z = fused.astype(np.float64)
    gate = activate64(rows.astype(np.float64) @ z.T, activation)
    return gate @ z


def reinject_full(h, visual_tokens, activation: Activation) -> np.ndarray:
    """All-token baseline re-injection phi(H Z^T) Z (the comparison arm)."""
    return injection_term(h, visual_tokens, activation).astype(np.float32)


def air_ffn_forward(
    h,
    visual_rows,
    weights: FfnWeights,
    reduced: ReducedTokens | None,
    fused,
    cfg: InjectionConfig,
    layer: int,
) -> np.ndarray:
    """FFN forward with the gated additive re-injection applied on top.

    all_rows injects at every sequence position; retained_rows injects only at
    the sequence positions of the retained visual tokens, leaving every other
    row byte-identical to the plain FFN output.
    """
    h = as_matrix(h, "hidden states")
    fused = as_matrix(fused, "fused tokens")
    base = ffn_forward(h, weights)
    if (
        cfg.mode is InjectionMode.OFF
        or fused.shape[0] == 0
        or not cfg.gate_contains(layer)
    ):
        return base

    if cfg.mode is InjectionMode.ALL_ROWS:
        term = injection_term(h, fused, cfg.activation)
        return (base.astype(np.float64) + term).astype(np.float32)

    if reduced is None:
        raise ShapeError("retained_rows mode requires the reduction result")
    visual_rows = np.asarray(list(visual_rows), dtype=np.int64)
    if visual_rows.size and (
        visual_rows.min() < 0 or visual_rows.max() >= h.shape[0]
    ):
        raise ShapeError("visual_rows outside the sequence")
    retained = np.asarray(reduced.selected_indices, dtype=np.int64)
    if retained.size and retained.max() >= visual_rows.size:
        raise ShapeError("retained index outside visual_rows")
    positions = visual_rows[retained]
    term = injection_term(h[positions], fused, cfg.activation)
    out = base.astype(np.float64)
    out[positions] += term
    result = out.astype(np.float32)
    # rows without injection must stay byte-identical to the plain FFN
    mask = np.ones(h.shape[0], dtype=bool)
    mask[positions] = False
    result[mask] = base[mask]
    return result


def weights_from_seed(
    seed: int,
    d: int,
    d_ff: int,
    activation: Activation = Activation.SILU,
) -> FfnWeights:
    """Deterministic toy FFN weights with 1/sqrt(fan-in) scaling."""
    rng = np.random.default_rng(seed)
    w1 = rng.standard_normal((d, d_ff)) / np.sqrt(d)
    w2 = rng.standard_normal((d, d_ff)) / np.sqrt(d_ff)
    return FfnWeights(
        w1=w1.astype(np.float32), w2=w2.astype(np.float32), activation=activation
    )
