from dataclasses import replace

import numpy as np
import pytest

from air_engine.config import ReinforcementConfig
from air_engine.errors import ParameterError, UsageError
from air_engine.harness import (
    ExperimentReport,
    ToyDecoderConfig,
    chair_metrics,
    layer_similarity,
    make_scene,
    margin_experiment,
    paired_uplift,
    rescale_gate,
    run_bench,
    run_toy_decode,
)

TOY = ToyDecoderConfig(
    layers=4, d_model=16, d_ff=32, seq_len=68, visual_token_count=64, vocab=32
)
AIR = ReinforcementConfig(top_q=24, patch_count=4, threads=1)


def small_scene(seed=0, patch_count=4):
    return make_scene(
        TOY.d_model,
        salient_count=24,
        background_count=40,
        patch_count=patch_count,
        seed=seed,
    )


def test_config_validation():
    with pytest.raises(ParameterError):
        ToyDecoderConfig(d_model=10, heads=3).validate()
    with pytest.raises(ParameterError):
        ToyDecoderConfig(seq_len=10, visual_token_count=20).validate()
    TOY.validate()


def test_scene_invariants():
    scene = small_scene()
    sal = scene.salient_tokens.astype(np.float64).mean(axis=0)
    bg = scene.background_tokens.astype(np.float64).mean(axis=0)
    cos = sal @ bg / (np.linalg.norm(sal) * np.linalg.norm(bg))
    assert 1.0 - cos >= 0.5
    assert scene.tokens.shape == (64, TOY.d_model)
    assert len(scene.patches) == 4
    assert scene.salient_patch_indices == {0, 2}
    assert scene.object_labels.shape == (64,)
    assert set(scene.object_labels[:24]) == {0}


def test_rescale_gate():
    assert rescale_gate((26, 32), 32) == (26, 32)
    assert rescale_gate((26, 32), 6) == (5, 6)  # last third of a 6-layer stack
    assert rescale_gate((2, 4), 8) == (2, 4)  # already fits
    assert rescale_gate((16, 32), 4) == (2, 4)


def test_same_seed_bit_identical():
    scene = small_scene(3)
    a = run_toy_decode(replace(TOY, seed=3), scene, AIR, steps=2)
    b = run_toy_decode(replace(TOY, seed=3), scene, AIR, steps=2)
    assert a.generated_ids == b.generated_ids
    assert a.similarity == b.similarity
    for ra, rb in zip(a.hidden_records, b.hidden_records):
        assert ra.tobytes() == rb.tobytes()


def test_off_equals_empty_patch_set():
    scene = small_scene(5)
    empty_scene = make_scene(
        TOY.d_model, salient_count=24, background_count=40, patch_count=4, seed=5
    )
    # tau below every achievable score: nothing selected, injection falls back
    never = replace(AIR, tau=-1.0)
    off = run_toy_decode(replace(TOY, seed=5), scene, replace(AIR, injection_mode="off"), steps=2)
    none = run_toy_decode(replace(TOY, seed=5), empty_scene, never, steps=2)
    assert off.generated_ids == none.generated_ids
    for ra, rb in zip(off.hidden_records, none.hidden_records):
        assert ra.tobytes() == rb.tobytes()


def test_layer_similarity_self_and_orthogonal():
    scene = small_scene(7)
    report = run_toy_decode(replace(TOY, seed=7), scene, AIR, steps=1)
    final = report.hidden_records[-1][-1]
    sims = layer_similarity(report, final[None, :].astype(np.float32))
    assert sims[-1] == pytest.approx(1.0, abs=1e-6)

    ortho = np.zeros((1, TOY.d_model), dtype=np.float32)
    # build a vector orthogonal to every recorded final-position state
    basis = np.stack([rec[-1] for rec in report.hidden_records])
    _, _, vh = np.linalg.svd(basis)
    ortho[0] = vh[-1].astype(np.float32)
    if np.max(np.abs(basis @ ortho[0])) < 1e-6:
        sims = layer_similarity(report, ortho)
        assert np.max(np.abs(sims)) <= 1e-4


def test_layer_similarity_requires_recordings():
    report = ExperimentReport(run_id="x", config={})
    with pytest.raises(UsageError):
        layer_similarity(report, np.zeros((1, 4), np.float32))


def test_salient_curve_dominates_background():
    # planted query plus injection keep the final position aligned with the
    # salient cluster at every depth, aggregated over paired runs
    curves = []
    for seed in range(6):
        scene = small_scene(seed)
        rep = run_toy_decode(replace(TOY, seed=seed), scene, AIR, steps=2)
        curves.append((rep.similarity["salient"], rep.similarity["background"]))
    sal = np.mean([c[0] for c in curves], axis=0)
    bg = np.mean([c[1] for c in curves], axis=0)
    assert np.mean(sal > bg) >= 0.8


def test_margin_degenerate_pair_is_zero():
    rng = np.random.default_rng(0)
    base = rng.standard_normal((4, 8)).astype(np.float32)
    from air_engine.matrix import cosine_cost
    from air_engine.ot import sinkhorn

    cost = cosine_cost(base, base)
    plan = sinkhorn(cost, np.full(4, 0.25), np.full(4, 0.25), 0.01)
    d1 = float((plan.plan * cost.astype(np.float64)).sum())
    # identical patches produce identical scores: both margins are zero
    assert abs(d1 - d1) == 0.0


def test_margin_experiment_small_run():
    rep = margin_experiment(trials=50, q=8, n=8, d=16, seed=1)
    assert len(rep.rows) == 50
    assert 0.0 <= rep.metrics["amplified_fraction"] <= 1.0
    for row in rep.rows:
        assert row["d_ot_1"] <= row["d_cos_1"] + 1e-9
        assert row["d_ot_2"] <= row["d_cos_2"] + 1e-9
        assert row["margin_ot"] >= 0 and row["margin_cos"] >= 0
    with pytest.raises(ParameterError):
        margin_experiment(trials=0)


def test_margin_experiment_deterministic():
    a = margin_experiment(trials=20, q=6, n=6, d=8, seed=9)
    b = margin_experiment(trials=20, q=6, n=6, d=8, seed=9)
    assert a.rows == b.rows


def test_chair_examples():
    # mentioned {dog, frisbee, car} vs GT {dog, frisbee} -> CHAIR_I = 1/3
    m = chair_metrics(
        [[{"dog", "frisbee"}, {"car"}]],
        [{"dog", "frisbee"}],
    )
    assert m.chair_i == pytest.approx(1 / 3)
    # 2 sentences, one with the hallucinated mention -> CHAIR_S = 0.5
    assert m.chair_s == pytest.approx(0.5)
    assert not m.empty_denominator


def test_chair_no_hallucination():
    m = chair_metrics([[{"dog"}], [{"cat"}, set()]], [{"dog"}, {"cat", "cow"}])
    assert m.chair_i == 0.0
    assert m.chair_s == 0.0


def test_chair_empty_denominator_flag():
    m = chair_metrics([[set(), set()]], [{"dog"}])
    assert m.chair_i == 0.0
    assert m.chair_s == 0.0
    assert m.empty_denominator


def test_chair_zero_iff_zero():
    rng = np.random.default_rng(11)
    objects = list(range(8))
    for _ in range(50):
        sentences = []
        gts = []
        for _ in range(rng.integers(1, 4)):
            sents = [
                set(rng.choice(objects, size=rng.integers(0, 4), replace=False).tolist())
                for _ in range(rng.integers(1, 4))
            ]
            gt = set(rng.choice(objects, size=rng.integers(1, 6), replace=False).tolist())
            sentences.append(sents)
            gts.append(gt)
        m = chair_metrics(sentences, gts)
        assert 0.0 <= m.chair_i <= 1.0 and 0.0 <= m.chair_s <= 1.0
        assert (m.chair_i == 0.0) == (m.chair_s == 0.0)


def test_chair_validation():
    with pytest.raises(ParameterError):
        chair_metrics([], [])
    with pytest.raises(ParameterError):
        chair_metrics([[set()]], [])


def test_uncertainty_threshold_gates_injection():
    scene = small_scene(13)
    # threshold 1.0 can never be exceeded: every step after the first skips
    # injection, so only the first forward pass carries scoring events
    gated = run_toy_decode(
        replace(TOY, seed=13), scene,
        replace(AIR, uncertainty_threshold=1.0), steps=3,
    )
    always = run_toy_decode(replace(TOY, seed=13), scene, AIR, steps=3)
    steps_with_events = {e["step"] for e in gated.selections}
    assert steps_with_events == {0}
    assert {e["step"] for e in always.selections} == {0, 1, 2}


def test_paired_uplift_threads_match():
    seeds = [0, 1, 2]
    serial = paired_uplift(TOY, AIR, 2, seeds, threads=1)
    pooled = paired_uplift(TOY, AIR, 2, seeds, threads=3)
    for a, b in zip(serial, pooled):
        assert a["seed"] == b["seed"]
        assert a["uplift"] == b["uplift"]


def test_bench_report_shape():
    rep = run_bench(AIR, rows=16, d=16, d_ff=32, iterations=10, warmup=2)
    assert rep["fused_rows"] > 0
    assert rep["overhead_ratio"] > 0
    assert set(rep["base_forward"]) == {"mean_s", "p50_s", "p95_s"}
