"""Visual-token reduction, entropic-OT patch scoring, and FFN re-injection."""

__version__ = "0.1.0"

from .config import ReinforcementConfig
from .matrix import Activation, apply_activation, as_matrix, cosine_cost, matmul
from .npyio import read_npy, write_npy
from .ot import TransportPlan, cosine_baseline, exact_matching_ot, ot_distance, sinkhorn
from .reduction import ReducedTokens, compute_prototype, select_top_q
from .scoring import (
    PatchEmbedding,
    PatchScore,
    SelectionResult,
    fuse_patches,
    score_patch,
    select_patches,
)
from .injection import (
    FfnWeights,
    InjectionConfig,
    InjectionMode,
    air_ffn_forward,
    ffn_forward,
    reinject_full,
)

__all__ = [
    "__version__",
    "ReinforcementConfig",
    "Activation",
    "apply_activation",
    "as_matrix",
    "cosine_cost",
    "matmul",
    "read_npy",
    "write_npy",
    "TransportPlan",
    "sinkhorn",
    "ot_distance",
    "cosine_baseline",
    "exact_matching_ot",
    "ReducedTokens",
    "compute_prototype",
    "select_top_q",
    "PatchEmbedding",
    "PatchScore",
    "SelectionResult",
    "score_patch",
    "select_patches",
    "fuse_patches",
    "FfnWeights",
    "InjectionConfig",
    "InjectionMode",
    "ffn_forward",
    "reinject_full",
    "air_ffn_forward",
]
