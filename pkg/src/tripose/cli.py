"""Command-line benchmark and estimation harness.

Subcommands::

    synth           generate one synthetic scene, run the estimator, report
    export-scene    generate a synthetic scene and write its track file
    estimate FILE   run the robust estimator on a track file
    sweep-noise     noise-resilience sweep (per mode and variant)
    sweep-outliers  robust-pipeline sweep over outlier fractions
    convergence     residual-form convergence comparison (+ cost landscape)
    ligt            linear-translation resilience sweep

Exit codes: 0 success, 1 usage or I/O error, 2 solver failure.  A JSON file
of flag defaults can be supplied with ``--config``.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

import numpy as np

from .bench import (
    ExperimentSpec,
    export_cost_landscape,
    run_convergence_test,
    run_ligt_resilience,
    run_noise_sweep,
    run_outlier_sweep,
    summarize,
)
from .pipeline import EstimationFailure, RansacConfig, estimate_three_view_pose
from .rotations import rotation_error, translation_direction_error
from .synth import ScenarioConfig, SceneGenerationError, generate_scene
from .trackio import TrackFileError, export_scene, ingest_tracks
from .translation import relative_from_global

USAGE_ERROR = 1
SOLVER_FAILURE = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def _add_scene_args(p, n_points=15, n_lines=15):
    p.add_argument("--n-points", type=int, default=n_points)
    p.add_argument("--n-lines", type=int, default=n_lines)
    p.add_argument("--noise", type=float, default=0.5, help="pixel noise std")
    p.add_argument("--mode", choices=["general", "planar", "pure_rotation"], default="general")
    p.add_argument("--outliers", type=float, default=0.0, help="outlier fraction")
    p.add_argument("--seed", type=int, default=0)


def _add_spec_args(p):
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", type=str, default=None, help="CSV output path")


def _scenario(args) -> ScenarioConfig:
    return ScenarioConfig(
        n_points=args.n_points,
        n_lines=args.n_lines,
        noise_std=args.noise,
        outlier_fraction=args.outliers,
        mode=args.mode,
        rng_seed=args.seed,
    )


def _print_summary(summary, keys):
    header = " | ".join(f"{k:>14}" for k in keys) + " | " + " | ".join(
        f"{k:>12}" for k in ("trials", "mean e_rot", "mean e_t")
    )
    print(header)
    print("-" * len(header))
    for key, stats in summary.items():
        cells = " | ".join(f"{str(k):>14}" for k in key)
        print(
            f"{cells} | {stats['trials']:>12} | "
            f"{stats.get('mean_e_rot_deg', float('nan')):>12.4f} | "
            f"{stats.get('mean_e_t_deg', float('nan')):>12.4f}"
        )


def _cmd_synth(args) -> int:
    scene = generate_scene(_scenario(args))
    try:
        est = estimate_three_view_pose(
            scene.point_tracks, scene.line_tracks, RansacConfig(rng_seed=args.seed)
        )
    except EstimationFailure as err:
        print(f"estimation failed: {err}", file=sys.stderr)
        return SOLVER_FAILURE
    e_rot = rotation_error(scene.gt_r10, est.r10, scene.gt_r12, est.r12)
    print(f"rotation error: {e_rot:.6f} deg")
    if est.degenerate_translation:
        print("translation: degenerate (pure rotation)")
    else:
        t01, t12 = scene.gt_relative_translations
        e01, e12 = relative_from_global(est.translation, est.r10)
        e_t = translation_direction_error(t01, e01, t12, e12)
        print(f"translation direction error: {e_t:.6f} deg")
    print(f"point inliers: {int(est.point_inliers.sum())}/{est.point_inliers.size}")
    print(f"line inliers:  {int(est.line_inliers.sum())}/{est.line_inliers.size}")
    print(f"total time: {est.diagnostics['timing_ms']['total']:.1f} ms")
    return 0


def _cmd_export_scene(args) -> int:
    scene = generate_scene(_scenario(args))
    export_scene(args.out, scene)
    print(f"wrote {len(scene.point_tracks)} point and {len(scene.line_tracks)} line tracks to {args.out}")
    if args.gt_out:
        gt = {
            "r10": scene.gt_r10.tolist(),
            "r12": scene.gt_r12.tolist(),
            "translations": scene.gt_translations.tolist(),
        }
        with open(args.gt_out, "w", encoding="utf-8") as f:
            json.dump(gt, f, indent=1)
        print(f"wrote ground truth to {args.gt_out}")
    return 0


def _cmd_estimate(args) -> int:
    result = ingest_tracks(args.trackfile, sigma=args.sigma)
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    try:
        est = estimate_three_view_pose(
            result.point_tracks, result.line_tracks, RansacConfig(rng_seed=args.seed)
        )
    except EstimationFailure as err:
        print(f"estimation failed: {err}", file=sys.stderr)
        return SOLVER_FAILURE
    out = {
        "r10": est.r10.tolist(),
        "r12": est.r12.tolist(),
        "translation_degenerate": est.degenerate_translation,
        "point_inliers": int(est.point_inliers.sum()),
        "line_inliers": int(est.line_inliers.sum()),
        "warnings": len(result.warnings),
    }
    if not est.degenerate_translation:
        out["global_translations"] = est.translation.translations.tolist()
    text = json.dumps(out, indent=1)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(text + "\n")
    print(text)
    return 0


def _cmd_sweep_noise(args) -> int:
    spec = ExperimentSpec(
        kind="noise_sweep",
        trials=args.trials,
        n_points=args.n_points,
        n_lines=args.n_lines,
        noise_grid=tuple(args.noise_grid),
        modes=tuple(args.modes),
        variants=tuple(args.variants),
        init=args.init,
        init_variation=args.init_variation,
        seed=args.seed,
        jobs=args.jobs,
        out=args.out,
    )
    _, summary = run_noise_sweep(spec)
    _print_summary(summary, ("mode", "variant", "noise"))
    return 0


def _cmd_sweep_outliers(args) -> int:
    spec = ExperimentSpec(
        kind="outlier_sweep",
        trials=args.trials,
        n_points=args.n_points,
        n_lines=args.n_lines,
        noise=args.noise,
        outlier_grid=tuple(args.fractions),
        variants=tuple(args.variants),
        seed=args.seed,
        jobs=args.jobs,
        out=args.out,
    )
    rows, summary = run_outlier_sweep(spec)
    _print_summary(summary, ("variant", "outlier_fraction"))
    times = [r["time_total_ms"] for r in rows if not r.get("failed")]
    if times:
        print(f"median per-pose time: {np.median(times):.1f} ms")
    return 0


def _cmd_convergence(args) -> int:
    spec = ExperimentSpec(
        kind="convergence",
        trials=args.trials,
        n_lines=args.n_lines,
        noise=args.noise,
        deviation_grid_deg=tuple(args.deviations),
        line_forms=tuple(args.forms),
        seed=args.seed,
        jobs=args.jobs,
        out=args.out,
    )
    if args.landscape_out:
        lspec = replace(spec, out=args.landscape_out)
        export_cost_landscape(lspec)
        print(f"wrote cost landscape grid to {args.landscape_out}")
        if not args.deviations:
            return 0
    _, summary = run_convergence_test(spec)
    print(f"{'form':>10} | {'deviation':>10} | {'success rate':>12}")
    for (form, dev), stats in summary.items():
        print(f"{form:>10} | {dev:>10.1f} | {stats['success_rate']:>12.3f}")
    return 0


def _cmd_ligt(args) -> int:
    spec = ExperimentSpec(
        kind="ligt_resilience",
        trials=args.trials,
        n_points=args.n_points,
        n_lines=args.n_lines,
        noise_grid=tuple(args.noise_grid),
        rot_noise_grid_deg=tuple(args.rot_grid),
        ligt_variants=tuple(args.variants),
        seed=args.seed,
        jobs=args.jobs,
        out=args.out,
    )
    _, summary = run_ligt_resilience(spec)
    print(f"{'variant':>8} | {'rot pert':>9} | {'noise':>6} | {'mean e_t':>10}")
    for (variant, rot, noise), stats in summary.items():
        print(f"{variant:>8} | {rot:>9.1f} | {noise:>6.1f} | {stats['mean_e_t_deg']:>10.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tripose", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--config", type=str, default=None, help="JSON file of flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="single synthetic scene + estimate")
    _add_scene_args(p, 100, 100)
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("export-scene", help="write a synthetic scene track file")
    _add_scene_args(p)
    p.add_argument("--out", type=str, required=True)
    p.add_argument("--gt-out", type=str, default=None, help="also write ground truth JSON")
    p.set_defaults(fn=_cmd_export_scene)

    p = sub.add_parser("estimate", help="estimate pose from a track file")
    p.add_argument("trackfile", type=str)
    p.add_argument("--sigma", type=float, default=1.0, help="assumed pixel noise std")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=str, default=None, help="write the pose JSON here too")
    p.set_defaults(fn=_cmd_estimate)

    p = sub.add_parser("sweep-noise", help="noise resilience sweep")
    _add_spec_args(p)
    p.add_argument("--n-points", type=int, default=15)
    p.add_argument("--n-lines", type=int, default=15)
    p.add_argument("--noise-grid", type=float, nargs="+", default=[0.0, 0.5, 1.0, 1.5, 2.0])
    p.add_argument("--modes", nargs="+", default=["general"],
                   choices=["general", "planar", "pure_rotation"])
    p.add_argument("--variants", nargs="+", default=["combined"],
                   choices=["combined", "points", "lines", "lines-weighted"])
    p.add_argument("--init", choices=["near-truth", "ransac"], default="near-truth")
    p.add_argument("--init-variation", type=float, default=0.015)
    p.set_defaults(fn=_cmd_sweep_noise)

    p = sub.add_parser("sweep-outliers", help="outlier robustness sweep")
    _add_spec_args(p)
    p.add_argument("--n-points", type=int, default=100)
    p.add_argument("--n-lines", type=int, default=100)
    p.add_argument("--noise", type=float, default=0.5)
    p.add_argument("--fractions", type=float, nargs="+", default=[0.0, 0.05, 0.1, 0.15, 0.2])
    p.add_argument("--variants", nargs="+", default=["combined"],
                   choices=["combined", "points", "lines", "lines-weighted"])
    p.set_defaults(fn=_cmd_sweep_outliers)

    p = sub.add_parser("convergence", help="line residual form convergence test")
    _add_spec_args(p)
    p.add_argument("--n-lines", type=int, default=10)
    p.add_argument("--noise", type=float, default=0.5)
    p.add_argument("--deviations", type=float, nargs="*", default=[0, 1, 2, 3, 5, 7, 10])
    p.add_argument("--forms", nargs="+", default=["triple", "min-eig"], choices=["triple", "min-eig"])
    p.add_argument("--landscape-out", type=str, default=None,
                   help="also export the cost-landscape grid CSV")
    p.set_defaults(fn=_cmd_convergence)

    p = sub.add_parser("ligt", help="linear global-translation resilience sweep")
    _add_spec_args(p)
    p.add_argument("--n-points", type=int, default=10)
    p.add_argument("--n-lines", type=int, default=10)
    p.add_argument("--rot-grid", type=float, nargs="+", default=[0, 2.5, 5, 7.5, 10])
    p.add_argument("--noise-grid", type=float, nargs="+", default=[0, 2.5, 5, 7.5, 10])
    p.add_argument("--variants", nargs="+", default=["points", "lines", "both"],
                   choices=["points", "lines", "both"])
    p.set_defaults(fn=_cmd_ligt)
    return parser


def _apply_config_defaults(parser, argv):
    """Pull --config out of argv and install its values as flag defaults."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    try:
        path = argv[i + 1]
    except IndexError:
        return argv
    with open(path, encoding="utf-8") as f:
        overrides = json.load(f)
    if not isinstance(overrides, dict):
        raise TrackFileError("config file must hold a JSON object")
    for action in parser._subparsers._group_actions[0].choices.values():  # noqa: SLF001
        known = {a.dest for a in action._actions}  # noqa: SLF001
        action.set_defaults(**{k: v for k, v in overrides.items() if k in known})
    return argv[:i] + argv[i + 2 :]


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _apply_config_defaults(parser, argv)
        args = parser.parse_args(argv)
    except SystemExit as err:
        return int(err.code or 0)
    except (OSError, json.JSONDecodeError, TrackFileError) as err:
        print(f"error: {err}", file=sys.stderr)
        return USAGE_ERROR
    try:
        return args.fn(args)
    except (TrackFileError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return USAGE_ERROR
    except SceneGenerationError as err:
        print(f"error: {err}", file=sys.stderr)
        return SOLVER_FAILURE


if __name__ == "__main__":
    raise SystemExit(main())
