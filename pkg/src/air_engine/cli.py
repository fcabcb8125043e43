"""Command-line entry point.

Subcommands: score, select, inject, margin-exp, ablate, bench, simulate,
chair, serve. All randomness flows from the config seed; outputs are written
atomically; exit codes are 0 success, 1 usage, 2 input format, 3 dimension
mismatch, 4 internal.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from .config import load_config, parse_override
from .errors import EngineError, FormatError, ShapeError, UsageError
from .harness import (
    ABSENT_OBJECTS,
    PRESENT_OBJECTS,
    ToyDecoderConfig,
    chair_metrics,
    margin_experiment,
    paired_uplift,
    run_ablation,
    run_bench,
)
from .matrix import as_matrix
from .npyio import read_npy, write_npy
from .pipeline import run_pipeline
from .reduction import clamp_top_q, select_top_q
from .reporting import write_csv, write_json
from .scoring import load_patch_dir, score_patches, select_patches

SCORES_HEADER = ["m", "d_ot", "d_cos", "converged", "selected"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; we use 1
        raise UsageError(message)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config key (repeatable)",
    )


def _config(args):
    overrides = dict(parse_override(o) for o in args.overrides)
    return load_config(args.config, overrides)


def cmd_score(args) -> int:
    cfg = _config(args)
    h_prime = as_matrix(read_npy(args.h_prime), "h_prime")
    patches = load_patch_dir(args.patch_dir)
    if not patches:
        print("warning: no patch_NNN.npy files found; writing empty scores", file=sys.stderr)
        write_csv(args.out, SCORES_HEADER, [])
        return 0
    scores = score_patches(
        h_prime,
        patches,
        epsilon=cfg.epsilon,
        max_iter=cfg.sinkhorn_max_iter,
        tol=cfg.sinkhorn_tol,
        threads=cfg.threads,
    )
    selected = set(select_patches(scores, cfg.tau))
    rows = [
        [s.index, s.d_ot, s.d_cos, s.converged, s.index in selected] for s in scores
    ]
    write_csv(args.out, SCORES_HEADER, rows)
    return 0


def cmd_select(args) -> int:
    cfg = _config(args)
    tokens = as_matrix(read_npy(args.tokens), "tokens")
    q = clamp_top_q(cfg.top_q, tokens.shape[0])
    reduced = select_top_q(tokens, q)
    write_npy(args.out_tokens, reduced.h_prime)
    write_csv(
        args.out_indices,
        ["k", "distance"],
        [[i, float(reduced.distances[i])] for i in reduced.selected_indices],
    )
    return 0


def cmd_inject(args) -> int:
    cfg = _config(args)
    hidden = as_matrix(read_npy(args.hidden), "hidden")
    visual = as_matrix(read_npy(args.visual), "visual") if args.visual else hidden
    patches = load_patch_dir(args.patch_dir)
    result = run_pipeline(hidden, visual, patches, cfg, layer=args.layer)
    write_npy(args.out, result.injected)
    if args.scores_out:
        selected = set(result.selected)
        write_csv(
            args.scores_out,
            SCORES_HEADER,
            [
                [s.index, s.d_ot, s.d_cos, s.converged, s.index in selected]
                for s in result.scores
            ],
        )
    return 0


def cmd_margin_exp(args) -> int:
    cfg = _config(args)
    report = margin_experiment(
        trials=args.trials,
        q=args.q,
        n=args.n,
        d=args.d,
        epsilon_factor=args.epsilon_factor,
        seed=cfg.seed if args.seed is None else args.seed,
        max_iter=cfg.sinkhorn_max_iter,
        tol=cfg.sinkhorn_tol,
    )
    header = [
        "trial", "d_ot_1", "d_ot_2", "d_cos_1", "d_cos_2",
        "margin_ot", "margin_cos", "differential", "amplified",
    ]
    write_csv(args.out, header, [[r[k] for k in header] for r in report.rows])
    write_json(args.summary, {"metrics": report.metrics, "config": report.config,
                              "wall_times": report.wall_times})
    return 0


def cmd_ablate(args) -> int:
    cfg = _config(args)
    values = [v for v in args.values.split(",") if v]
    if not values:
        raise UsageError("--values must list at least one grid value")
    toy = ToyDecoderConfig()
    rows = run_ablation(
        cfg, args.param, values, cfg=toy,
        seeds=list(range(args.seeds)), steps=args.steps,
    )
    header = [
        "param", "value", "first_event_mean_d_ot", "first_event_selected",
        "total_selected", "mean_uplift", "positive_fraction", "wall_time_s",
    ]
    write_csv(args.out, header, [[r[k] for k in header] for r in rows])
    return 0


def cmd_bench(args) -> int:
    cfg = _config(args)
    report = run_bench(
        cfg,
        rows=args.rows,
        d=args.d,
        d_ff=args.d_ff,
        iterations=args.iterations,
    )
    write_json(args.out, report)
    print(f"overhead_ratio: {report['overhead_ratio']:.3f}")
    return 0


def cmd_simulate(args) -> int:
    cfg = _config(args)
    toy = ToyDecoderConfig()
    seeds = list(range(args.seeds))
    results = paired_uplift(toy, cfg, args.steps, seeds, threads=cfg.threads)

    if args.dump_scene:
        from .harness import scene_for

        scene = scene_for(toy, cfg.patch_count, seeds[0])
        sdir = f"{args.out_dir.rstrip('/')}/scene"
        write_npy(f"{sdir}/salient.npy", scene.salient_tokens)
        write_npy(f"{sdir}/background.npy", scene.background_tokens)
        for p in scene.patches:
            write_npy(f"{sdir}/patch_{p.index:03d}.npy", p.tokens)

    uplifts = [r["uplift"] for r in results]
    layers = len(results[0]["similarity_curves_on"]["salient"])
    mean_sal = [
        float(np.mean([r["similarity_curves_on"]["salient"][i] for r in results]))
        for i in range(layers)
    ]
    mean_bg = [
        float(np.mean([r["similarity_curves_on"]["background"][i] for r in results]))
        for i in range(layers)
    ]

    captions = []
    for r in results:
        ids = r["generated_on"]
        sentences = [ids[i : i + 2] for i in range(0, len(ids), 2)]
        captions.append(
            {
                "seed": r["seed"],
                "sentences": [
                    sorted({t for t in s if t < PRESENT_OBJECTS + ABSENT_OBJECTS})
                    for s in sentences
                ],
                "ground_truth": list(range(PRESENT_OBJECTS)),
            }
        )
    chair = chair_metrics(
        [[set(s) for s in c["sentences"]] for c in captions],
        [set(c["ground_truth"]) for c in captions],
    )

    out = args.out_dir.rstrip("/")
    write_csv(
        f"{out}/uplift.csv",
        ["seed", "similarity_off", "similarity_on", "uplift", "selected_total"],
        [
            [r["seed"], r["similarity_off"], r["similarity_on"], r["uplift"], r["selected_total"]]
            for r in results
        ],
    )
    write_csv(
        f"{out}/similarity.csv",
        ["layer", "salient", "background"],
        [[i, mean_sal[i], mean_bg[i]] for i in range(layers)],
    )
    write_json(f"{out}/captions.json", captions)
    write_json(
        f"{out}/report.json",
        {
            "config": cfg.to_dict(),
            "decoder": {"layers": toy.layers, "d_model": toy.d_model,
                        "seq_len": toy.seq_len, "visual_token_count": toy.visual_token_count},
            "seeds": seeds,
            "steps": args.steps,
            "metrics": {
                "mean_uplift": float(np.mean(uplifts)),
                "positive_fraction": float(np.mean([u > 0 for u in uplifts])),
                "chair_i": chair.chair_i,
                "chair_s": chair.chair_s,
            },
            "similarity": {"salient": mean_sal, "background": mean_bg},
        },
    )
    print(f"mean_uplift: {float(np.mean(uplifts)):.4f}  "
          f"positive_fraction: {float(np.mean([u > 0 for u in uplifts])):.2f}")
    return 0


def cmd_chair(args) -> int:
    import json

    try:
        doc = json.loads(open(args.captions).read())
    except OSError as exc:
        raise FormatError(f"cannot read {args.captions}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON in {args.captions}: {exc}") from None
    if not isinstance(doc, list):
        raise FormatError("captions file must hold a JSON list")
    try:
        sentences = [[set(s) for s in c["sentences"]] for c in doc]
        ground_truth = [set(c["ground_truth"]) for c in doc]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"caption records need sentences/ground_truth: {exc}") from None
    m = chair_metrics(sentences, ground_truth)
    write_json(
        args.out,
        {"chair_i": m.chair_i, "chair_s": m.chair_s, "empty_denominator": m.empty_denominator},
    )
    print(f"chair_i: {m.chair_i!r}  chair_s: {m.chair_s!r}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("air_engine.service:app", host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="air", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="score patches against reduced tokens")
    p.add_argument("h_prime", help="NPY matrix of reduced tokens")
    p.add_argument("patch_dir", help="directory of patch_NNN.npy files")
    _add_config_flags(p)
    p.add_argument("--out", default="scores.csv")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("select", help="reduce tokens to the Top-Q most distinctive")
    p.add_argument("tokens", help="NPY matrix of tokens")
    _add_config_flags(p)
    p.add_argument("--out-tokens", default="h_prime.npy")
    p.add_argument("--out-indices", default="indices.csv")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("inject", help="run reduce/score/select/inject on a hidden matrix")
    p.add_argument("hidden", help="NPY matrix of hidden states (visual rows first)")
    p.add_argument("--patch-dir", required=True)
    p.add_argument("--visual", help="NPY matrix of visual rows (default: the hidden matrix)")
    p.add_argument("--layer", type=int, help="layer index (default: gate start)")
    _add_config_flags(p)
    p.add_argument("--out", default="injected.npy")
    p.add_argument("--scores-out")
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("margin-exp", help="transport vs mean-cost margin experiment")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--q", type=int, default=16)
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--d", type=int, default=32)
    p.add_argument("--epsilon-factor", type=float, default=0.01)
    p.add_argument("--seed", type=int)
    _add_config_flags(p)
    p.add_argument("--out", default="margins.csv")
    p.add_argument("--summary", default="margin_summary.json")
    p.set_defaults(func=cmd_margin_exp)

    p = sub.add_parser("ablate", help="sweep one config parameter over a grid")
    p.add_argument("--param", required=True, help="config key to sweep")
    p.add_argument("--values", required=True, help="comma-separated grid values")
    p.add_argument("--seeds", type=int, default=8)
    p.add_argument("--steps", type=int, default=3)
    _add_config_flags(p)
    p.add_argument("--out", default="ablation.csv")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("bench", help="forward-pass overhead micro-benchmark")
    p.add_argument("--rows", type=int, default=128)
    p.add_argument("--d", type=int, default=128)
    p.add_argument("--d-ff", type=int, default=512)
    p.add_argument("--iterations", type=int, default=200)
    _add_config_flags(p)
    p.add_argument("--out", default="bench.json")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("simulate", help="paired toy-decoder runs on planted scenes")
    p.add_argument("--seeds", type=int, default=50)
    p.add_argument("--steps", type=int, default=4)
    p.add_argument("--dump-scene", action="store_true",
                   help="also write the first seed's scene tensors as NPY")
    _add_config_flags(p)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("chair", help="hallucination ratios from a captions file")
    p.add_argument("captions", help="JSON list of caption records")
    p.add_argument("--out", default="chair.json")
    p.set_defaults(func=cmd_chair)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FormatError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ShapeError as exc:
        print(f"shape error: {exc}", file=sys.stderr)
        return exc.exit_code
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # exit-code contract: 4 means internal failure
        print(f"internal error: {exc!r}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
