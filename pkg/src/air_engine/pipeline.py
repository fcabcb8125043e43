"""Reduce -> score -> select -> inject as one reusable pass.

The CLI ``inject`` command and the HTTP service both run this function, so the
two surfaces agree numerically by construction. FFN weights are derived
deterministically from the config seed (hidden width d, inner width 4d); the
injection activation doubles as the FFN activation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ReinforcementConfig
from .errors import ShapeError
from .injection import (
    InjectionConfig,
    InjectionMode,
    air_ffn_forward,
    weights_from_seed,
)
from .matrix import Activation, as_matrix
from .reduction import ReducedTokens, clamp_top_q, select_top_q
from .scoring import PatchEmbedding, PatchScore, run_selection

__all__ = ["PipelineResult", "run_pipeline"]


@dataclass(frozen=True)
class PipelineResult:
    reduced: ReducedTokens
    scores: tuple[PatchScore, ...]
    selected: tuple[int, ...]
    fused: np.ndarray
    injected: np.ndarray  # (L, d) float32


def run_pipeline(
    hidden,
    visual,
    patches: list[PatchEmbedding],
    cfg: ReinforcementConfig,
    layer: int | None = None,
) -> PipelineResult:
    """Run the full reinforcement pass over a hidden-state matrix.

    ``visual`` are the rows treated as visual tokens; they are assumed to sit
    at the head of ``hidden`` (the standard layout for multimodal sequences).
    ``layer`` defaults to the start of the configured gate, i.e. injection is
    active whenever the selection is non-empty.
    """
    cfg.validate()
    hidden = as_matrix(hidden, "hidden states")
    visual = as_matrix(visual, "visual tokens")
    if visual.shape[1] != hidden.shape[1]:
        raise ShapeError(
            f"visual width {visual.shape[1]} != hidden width {hidden.shape[1]}"
        )
    k = visual.shape[0]
    if k > hidden.shape[0]:
        raise ShapeError(
            f"{k} visual rows cannot exceed the {hidden.shape[0]}-row sequence"
        )

    q = clamp_top_q(cfg.top_q, k)
    reduced = select_top_q(visual, q)
    selection = run_selection(reduced.h_prime, patches, cfg)

    d = hidden.shape[1]
    activation = Activation.parse(cfg.injection_activation)
    weights = weights_from_seed(cfg.seed, d, 4 * d, activation)
    inj_cfg = InjectionConfig(
        mode=InjectionMode(cfg.injection_mode),
        activation=activation,
        layer_gate=cfg.layer_gate,
    )
    injected = air_ffn_forward(
        hidden,
        np.arange(k),
        weights,
        reduced,
        selection.fused,
        inj_cfg,
        cfg.layer_gate[0] if layer is None else layer,
    )
    return PipelineResult(
        reduced=reduced,
        scores=selection.scores,
        selected=selection.selected,
        fused=selection.fused,
        injected=injected,
    )
