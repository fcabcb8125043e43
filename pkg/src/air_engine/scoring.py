"""Per-patch transport scoring, threshold selection, and fusion.

Each patch is compared against the reduced token set through the cosine-cost
matrix; the entropic transport cost is the alignment score and the plain mean
cost is kept alongside as the uniform-plan baseline. Patches at or below the
threshold are fused by row concatenation in ascending patch order.
"""
from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import EPSILON_AUTO_FACTOR, ReinforcementConfig
from .errors import FormatError, ShapeError
from .matrix import as_matrix, cosine_cost
from .npyio import read_npy
from .ot import cosine_baseline, ot_distance, sinkhorn

__all__ = [
    "PatchEmbedding",
    "PatchScore",
    "SelectionResult",
    "resolve_epsilon",
    "score_patch",
    "score_patches",
    "select_patches",
    "fuse_patches",
    "run_selection",
    "load_patch_dir",
]

PATCH_FILE_RE = re.compile(r"^patch_(\d{3,})\.npy$")


@dataclass(frozen=True)
class PatchEmbedding:
    index: int
    tokens: np.ndarray  # (N, d) float32


@dataclass(frozen=True)
class PatchScore:
    index: int
    d_ot: float
    d_cos: float
    converged: bool


@dataclass(frozen=True)
class SelectionResult:
    tau: float
    selected: tuple[int, ...]
    fused: np.ndarray  # concatenated selected patch tokens, (sum N_m, d)
    scores: tuple[PatchScore, ...]


def resolve_epsilon(epsilon, cost: np.ndarray) -> float:
    """Resolve 'auto' epsilon to a fraction of the mean cost of this instance."""
    if epsilon == "auto":
        mean = float(np.asarray(cost, dtype=np.float64).mean()) if cost.size else 0.0
        return EPSILON_AUTO_FACTOR * mean if mean > 0 else 1e-6
    return float(epsilon)


def score_patch(
    h_prime,
    patch: PatchEmbedding,
    epsilon="auto",
    max_iter: int = 1000,
    tol: float = 1e-6,
) -> PatchScore:
    """Score one patch: entropic transport cost and uniform-plan baseline."""
    hp = as_matrix(h_prime, "reduced tokens")
    tokens = as_matrix(patch.tokens, f"patch {patch.index}")
    if hp.shape[1] != tokens.shape[1]:
        raise ShapeError(
            f"patch {patch.index} has width {tokens.shape[1]}, expected {hp.shape[1]}"
        )
    cost = cosine_cost(hp, tokens)
    eps = resolve_epsilon(epsilon, cost)
    q, n = cost.shape
    plan = sinkhorn(
        cost,
        np.full(q, 1.0 / q),
        np.full(n, 1.0 / n),
        eps,
        max_iter=max_iter,
        tol=tol,
    )
    return PatchScore(
        index=patch.index,
        d_ot=ot_distance(plan, cost),
        d_cos=cosine_baseline(cost),
        converged=plan.converged,
    )


def score_patches(
    h_prime,
    patches: list[PatchEmbedding],
    epsilon="auto",
    max_iter: int = 1000,
    tol: float = 1e-6,
    threads: int = 1,
) -> list[PatchScore]:
    """Score every patch, optionally fanning out over a thread pool.

    Results are ordered by position in ``patches`` regardless of pool size;
    each solve is a pure function, so values do not depend on scheduling.
    """
    if threads <= 1 or len(patches) <= 1:
        return [score_patch(h_prime, p, epsilon, max_iter, tol) for p in patches]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [
            pool.submit(score_patch, h_prime, p, epsilon, max_iter, tol)
            for p in patches
        ]
        return [f.result() for f in futures]


def select_patches(scores, tau: float) -> tuple[int, ...]:
    """Indices whose transport score is at or below the threshold (boundary in)."""
    return tuple(sorted(s.index for s in scores if s.d_ot <= tau))


def fuse_patches(patches: list[PatchEmbedding], selected) -> np.ndarray:
    """Concatenate selected patches' token rows in ascending patch index."""
    by_index = {p.index: p for p in patches}
    missing = sorted(set(selected) - set(by_index))
    if missing:
        raise ShapeError(f"selected patch index(es) {missing} not present")
    chosen = [as_matrix(by_index[m].tokens, f"patch {m}") for m in sorted(selected)]
    if not chosen:
        width = patches[0].tokens.shape[1] if patches else 0
        return np.zeros((0, width), dtype=np.float32)
    return np.concatenate(chosen, axis=0)


def run_selection(h_prime, patches, cfg: ReinforcementConfig) -> SelectionResult:
    """Score, threshold, and fuse in one pass driven by the run config."""
    scores = score_patches(
        h_prime,
        patches,
        epsilon=cfg.epsilon,
        max_iter=cfg.sinkhorn_max_iter,
        tol=cfg.sinkhorn_tol,
        threads=cfg.threads,
    )
    selected = select_patches(scores, cfg.tau)
    fused = fuse_patches(patches, selected)
    return SelectionResult(
        tau=cfg.tau, selected=selected, fused=fused, scores=tuple(scores)
    )


def load_patch_dir(path) -> list[PatchEmbedding]:
    """Load ``patch_NNN.npy`` files from a directory, ordered by index."""
    root = Path(path)
    if not root.is_dir():
        raise FormatError(f"patch directory {root} does not exist")
    found = {}
    for entry in root.iterdir():
        m = PATCH_FILE_RE.match(entry.name)
        if not m:
            continue
        index = int(m.group(1))
        if index in found:
            raise FormatError(f"duplicate patch index {index} in {root}")
        found[index] = entry
    patches = []
    for index in sorted(found):
        tokens = read_npy(found[index])
        patches.append(PatchEmbedding(index=index, tokens=as_matrix(tokens, found[index].name)))
    return patches
