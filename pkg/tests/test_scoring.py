import numpy as np
import pytest

from air_engine.config import ReinforcementConfig
from air_engine.errors import FormatError, ShapeError
from air_engine.matrix import cosine_cost
from air_engine.npyio import write_npy
from air_engine.scoring import (
    PatchEmbedding,
    PatchScore,
    fuse_patches,
    load_patch_dir,
    resolve_epsilon,
    run_selection,
    score_patch,
    score_patches,
    select_patches,
)

from reference_sinkhorn import reference_ot_distance


def patch(index, tokens):
    return PatchEmbedding(index=index, tokens=np.asarray(tokens, dtype=np.float32))


def test_identical_rows_score_zero():
    rng = np.random.default_rng(0)
    h = rng.standard_normal((6, 8)).astype(np.float32)
    s = score_patch(h, patch(0, h), epsilon=0.01)
    assert s.d_ot == pytest.approx(0.0, abs=1e-4)
    assert s.d_cos >= 0.0


def test_orthogonal_patch_scores_one():
    h = np.eye(4, 8, dtype=np.float32)  # rows in the first 4 axes
    p = np.eye(4, 8, k=4, dtype=np.float32)  # rows in the last 4 axes
    s = score_patch(h, patch(0, p), epsilon=0.1)
    assert s.d_ot == pytest.approx(1.0, abs=1e-6)
    assert s.d_cos == pytest.approx(1.0, abs=1e-6)


def test_score_against_independent_reference_solver():
    rng = np.random.default_rng(123)
    h = rng.standard_normal((8, 16)).astype(np.float32)
    tokens = rng.standard_normal((8, 16)).astype(np.float32)
    s = score_patch(h, patch(0, tokens), epsilon=0.05, max_iter=50000, tol=1e-10)
    cost = cosine_cost(h, tokens)
    ref = reference_ot_distance(cost, np.full(8, 1 / 8), np.full(8, 1 / 8), 0.05)
    assert s.d_ot == pytest.approx(ref, abs=1e-8)


def test_dominance_per_patch():
    rng = np.random.default_rng(1)
    h = rng.standard_normal((10, 12)).astype(np.float32)
    for i in range(20):
        s = score_patch(h, patch(i, rng.standard_normal((6, 12))), epsilon="auto")
        assert s.d_ot <= s.d_cos + 1e-9
        assert 0.0 <= s.d_ot <= 2.0
        assert 0.0 <= s.d_cos <= 2.0


def test_positive_scale_invariance():
    rng = np.random.default_rng(2)
    h = rng.standard_normal((6, 10)).astype(np.float32)
    tokens = rng.standard_normal((5, 10)).astype(np.float32)
    base = score_patch(h, patch(0, tokens), epsilon=0.05)
    scaled = score_patch(h, patch(0, tokens * 3.7), epsilon=0.05)
    assert scaled.d_ot == pytest.approx(base.d_ot, abs=1e-6)
    assert scaled.d_cos == pytest.approx(base.d_cos, abs=1e-6)


def test_resolve_epsilon_auto_is_relative():
    cost = np.full((3, 3), 0.8, dtype=np.float32)
    assert resolve_epsilon("auto", cost) == pytest.approx(0.08)
    assert resolve_epsilon(0.5, cost) == 0.5
    # an all-zero cost matrix cannot produce epsilon = 0
    assert resolve_epsilon("auto", np.zeros((2, 2), np.float32)) > 0


def test_select_patches_threshold_examples():
    scores = [
        PatchScore(0, 0.03, 0.5, True),
        PatchScore(1, 0.08, 0.5, True),
        PatchScore(2, 0.05, 0.5, True),
    ]
    assert select_patches(scores, 0.06) == (0, 2)
    assert select_patches(scores, -1.0) == ()
    assert select_patches(scores, 2.0) == (0, 1, 2)
    # boundary value is included
    assert select_patches(scores, 0.05) == (0, 2)


def test_selection_monotone_in_tau():
    rng = np.random.default_rng(3)
    scores = [PatchScore(i, float(rng.uniform(0, 1)), 1.0, True) for i in range(30)]
    taus = sorted(rng.uniform(0, 1, size=10))
    prev: set = set()
    for t in taus:
        cur = set(select_patches(scores, t))
        assert prev <= cur
        prev = cur


def test_fuse_patches_cases():
    p0 = patch(0, [[1.0, 2.0], [3.0, 4.0]])
    p1 = patch(1, [[5.0, 6.0], [7.0, 8.0], [9.0, 10.0]])
    fused = fuse_patches([p0, p1], {0, 1})
    assert fused.shape == (5, 2)
    assert np.array_equal(fused[:2], p0.tokens)
    assert np.array_equal(fused[2:], p1.tokens)

    only = fuse_patches([p0, p1], {1})
    assert np.array_equal(only, p1.tokens)

    empty = fuse_patches([p0, p1], set())
    assert empty.shape == (0, 2)

    with pytest.raises(ShapeError):
        fuse_patches([p0], {3})


def test_fuse_orders_by_patch_index_not_insertion():
    p0 = patch(0, [[1.0, 0.0]])
    p2 = patch(2, [[2.0, 0.0]])
    fused = fuse_patches([p2, p0], {2, 0})
    assert np.array_equal(fused, [[1.0, 0.0], [2.0, 0.0]])


def test_score_patches_thread_pool_matches_serial():
    rng = np.random.default_rng(4)
    h = rng.standard_normal((8, 8)).astype(np.float32)
    patches = [patch(i, rng.standard_normal((4, 8))) for i in range(9)]
    serial = score_patches(h, patches, threads=1)
    pooled = score_patches(h, patches, threads=4)
    assert [s.index for s in pooled] == [s.index for s in serial]
    for a, b in zip(serial, pooled):
        assert a.d_ot == b.d_ot and a.d_cos == b.d_cos


def test_run_selection_wires_tau_and_fusion():
    rng = np.random.default_rng(5)
    h = rng.standard_normal((6, 8)).astype(np.float32)
    near = [patch(i, h + 0.01 * rng.standard_normal((6, 8))) for i in range(2)]
    far = [patch(2, rng.standard_normal((6, 8)))]
    cfg = ReinforcementConfig(tau=0.2)
    result = run_selection(h, near + far, cfg)
    assert result.selected == (0, 1)
    assert result.fused.shape == (12, 8)
    assert {s.index for s in result.scores} == {0, 1, 2}


def test_width_mismatch_raises():
    h = np.zeros((3, 4), dtype=np.float32)
    with pytest.raises(ShapeError):
        score_patch(h, patch(0, np.zeros((2, 5), np.float32)))


def test_load_patch_dir(tmp_path):
    for i in (0, 1, 5):
        write_npy(tmp_path / f"patch_{i:03d}.npy", np.full((2, 3), float(i), np.float32))
    (tmp_path / "ignored.npy").write_bytes(b"not a patch")
    patches = load_patch_dir(tmp_path)
    assert [p.index for p in patches] == [0, 1, 5]
    assert patches[2].tokens[0, 0] == 5.0
    with pytest.raises(FormatError):
        load_patch_dir(tmp_path / "missing")
