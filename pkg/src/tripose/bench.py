"""Benchmark experiments over synthetic scenes, with CSV output.

Every experiment writes one CSV row per trial (seed and a full config echo
included, so any row can be replayed) and returns aggregate statistics.
Trials are independent and seeded, so they can be dispatched across a
process pool; results are written in deterministic order either way.

Estimator variants:

* ``combined``       points + lines, reweighted (5 loops)
* ``points``         points only, reweighted
* ``lines``          lines only, single unweighted solve
* ``lines-weighted`` lines only, reweighted

Translation-solver variants for the resilience experiment: ``points``,
``lines``, ``both`` (which feature types contribute constraint rows).
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .pipeline import (
    EstimationFailure,
    RansacConfig,
    estimate_three_view_pose,
    refine_three_view_pose,
)
from .rotations import (
    cayley_to_rotation,
    random_rotation_about_random_axis,
    rotation_error,
    rotation_to_cayley,
    translation_direction_error,
)
from .synth import ScenarioConfig, generate_scene
from .tracks import stack_line_tracks, stack_point_tracks
from .translation import (
    estimate_line_directions,
    line_constraint_rows,
    point_constraint_rows,
    relative_from_global,
    solve_global_translations,
)

__all__ = [
    "ExperimentSpec",
    "CSV_COLUMNS",
    "VARIANTS",
    "run_noise_sweep",
    "run_outlier_sweep",
    "run_convergence_test",
    "run_ligt_resilience",
    "export_cost_landscape",
    "summarize",
]

VARIANTS = {
    "combined": dict(use_points=True, use_lines=True, weighted=True, irls_loops=5),
    "points": dict(use_points=True, use_lines=False, weighted=True, irls_loops=5),
    "lines": dict(use_points=False, use_lines=True, weighted=False, irls_loops=1),
    "lines-weighted": dict(use_points=False, use_lines=True, weighted=True, irls_loops=5),
}

CSV_COLUMNS = [
    "experiment",
    "mode",
    "variant",
    "noise",
    "outlier_fraction",
    "deviation_deg",
    "rot_noise_deg",
    "line_form",
    "n_points",
    "n_lines",
    "trial",
    "seed",
    "e_rot_deg",
    "e_t_deg",
    "degenerate",
    "failed",
    "converged",
    "time_total_ms",
    "config",
]


@dataclass(frozen=True)
class ExperimentSpec:
    """Grid and bookkeeping parameters for one experiment run."""

    kind: str = "noise_sweep"
    trials: int = 200
    n_points: int = 15
    n_lines: int = 15
    noise_grid: tuple = (0.0, 0.5, 1.0, 1.5, 2.0)
    outlier_grid: tuple = (0.0, 0.05, 0.1, 0.15, 0.2)
    deviation_grid_deg: tuple = (0.0, 1.0, 2.0, 3.0, 5.0, 7.0, 10.0)
    rot_noise_grid_deg: tuple = (0.0, 2.5, 5.0, 7.5, 10.0)
    modes: tuple = ("general",)
    variants: tuple = ("combined",)
    line_forms: tuple = ("triple", "min-eig")
    ligt_variants: tuple = ("points", "lines", "both")
    init: str = "near-truth"  # near-truth | ransac
    init_variation: float = 0.015
    noise: float = 0.5  # fixed noise level where the grid is over something else
    seed: int = 0
    jobs: int = 1
    out: str | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


def _trial_seed(*key) -> int:
    return int(np.random.SeedSequence(tuple(int(round(1000 * k)) for k in key)).generate_state(1)[0])


def _eval_errors(scene, est):
    """(e_rot, e_t, degenerate) for an estimate against scene ground truth.

    The sign of a translation solution without cheirality information
    (line-only systems) is resolved against the ground truth here; it is
    unobservable from the data.
    """
    e_rot = rotation_error(scene.gt_r10, est.r10, scene.gt_r12, est.r12)
    if est.degenerate_translation:
        return e_rot, float("nan"), True
    t01, t12 = scene.gt_relative_translations
    if np.linalg.norm(t01) < 1e-12 or np.linalg.norm(t12) < 1e-12:
        return e_rot, float("nan"), True
    e01, e12 = relative_from_global(est.translation, est.r10)
    e_t = translation_direction_error(t01, e01, t12, e12)
    if not est.translation.sign_fixed:
        flipped = translation_direction_error(t01, -e01, t12, -e12)
        e_t = min(e_t, flipped)
    return e_rot, e_t, False


def _near_truth_init(scene, seed: int, variation: float) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, 7))))
    gt = np.concatenate(
        [rotation_to_cayley(scene.gt_r10), rotation_to_cayley(scene.gt_r12)]
    )
    return gt + rng.uniform(-variation, variation, size=6)


_MODE_IDS = {"general": 0, "planar": 1, "pure_rotation": 2}


def _noise_trial(task):
    spec, mode, noise, variant, trial = task
    seed = _trial_seed(spec.seed, 10 + _MODE_IDS[mode], noise, trial)
    cfg = ScenarioConfig(
        n_points=spec.n_points, n_lines=spec.n_lines, noise_std=noise, mode=mode, rng_seed=seed
    )
    row = {
        "experiment": "noise_sweep",
        "mode": mode,
        "variant": variant,
        "noise": noise,
        "n_points": spec.n_points,
        "n_lines": spec.n_lines,
        "trial": trial,
        "seed": seed,
        "config": json.dumps({"scenario": asdict(cfg), "init": spec.init}),
    }
    t0 = time.perf_counter()
    try:
        scene = generate_scene(cfg)
        vk = VARIANTS[variant]
        if spec.init == "near-truth":
            x0 = _near_truth_init(scene, seed, spec.init_variation)
            est = refine_three_view_pose(
                scene.point_tracks if vk["use_points"] else [],
                scene.line_tracks if vk["use_lines"] else [],
                x0,
                irls_loops=vk["irls_loops"],
                weighted=vk["weighted"],
                use_points=vk["use_points"],
                use_lines=vk["use_lines"],
            )
        else:
            est = estimate_three_view_pose(
                scene.point_tracks if vk["use_points"] else [],
                scene.line_tracks if vk["use_lines"] else [],
                RansacConfig(rng_seed=seed),
            )
        e_rot, e_t, degen = _eval_errors(scene, est)
        row.update(
            e_rot_deg=e_rot,
            e_t_deg=e_t,
            degenerate=degen,
            failed=False,
            converged=bool(est.diagnostics.get("irls_converged", True)),
        )
    except EstimationFailure as err:
        row.update(e_rot_deg=float("nan"), e_t_deg=float("nan"), degenerate=False, failed=True, converged=False)
        row["config"] = json.dumps({"error": str(err)})
    row["time_total_ms"] = 1e3 * (time.perf_counter() - t0)
    return row


def _outlier_trial(task):
    spec, fraction, variant, trial = task
    seed = _trial_seed(spec.seed, 1, fraction, trial)
    cfg = ScenarioConfig(
        n_points=spec.n_points,
        n_lines=spec.n_lines,
        noise_std=spec.noise,
        outlier_fraction=fraction,
        rng_seed=seed,
    )
    row = {
        "experiment": "outlier_sweep",
        "mode": "general",
        "variant": variant,
        "noise": spec.noise,
        "outlier_fraction": fraction,
        "n_points": spec.n_points,
        "n_lines": spec.n_lines,
        "trial": trial,
        "seed": seed,
        "config": json.dumps({"scenario": asdict(cfg)}),
    }
    t0 = time.perf_counter()
    try:
        scene = generate_scene(cfg)
        vk = VARIANTS[variant]
        est = estimate_three_view_pose(
            scene.point_tracks if vk["use_points"] else [],
            scene.line_tracks if vk["use_lines"] else [],
            RansacConfig(rng_seed=seed),
        )
        e_rot, e_t, degen = _eval_errors(scene, est)
        true_out = np.concatenate([scene.point_outliers, scene.line_outliers])
        pred_out = np.concatenate([~est.point_inliers, ~est.line_inliers])
        tp = int((pred_out & true_out).sum())
        fp = int((pred_out & ~true_out).sum())
        fn = int((~pred_out & true_out).sum())
        row.update(
            e_rot_deg=e_rot,
            e_t_deg=e_t,
            degenerate=degen,
            failed=False,
            converged=bool(est.diagnostics.get("irls_converged", True)),
            outlier_tp=tp,
            outlier_fp=fp,
            outlier_fn=fn,
        )
    except EstimationFailure as err:
        row.update(e_rot_deg=float("nan"), e_t_deg=float("nan"), degenerate=False, failed=True, converged=False)
        row["config"] = json.dumps({"error": str(err)})
    row["time_total_ms"] = 1e3 * (time.perf_counter() - t0)
    return row


def _convergence_trial(task):
    spec, deviation_deg, form, trial = task
    seed = _trial_seed(spec.seed, 2, deviation_deg, trial)
    cfg = ScenarioConfig(
        n_points=0, n_lines=spec.n_lines, noise_std=spec.noise, rng_seed=seed
    )
    scene = generate_scene(cfg)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, 9))))
    dr1 = random_rotation_about_random_axis(rng, np.radians(deviation_deg))
    dr2 = random_rotation_about_random_axis(rng, np.radians(deviation_deg))
    x0 = np.concatenate(
        [rotation_to_cayley(dr1 @ scene.gt_r10), rotation_to_cayley(dr2 @ scene.gt_r12)]
    )
    t0 = time.perf_counter()
    est = refine_three_view_pose(
        [], scene.line_tracks, x0, weighted=False, use_points=False, line_form=form
    )
    e_rot = rotation_error(scene.gt_r10, est.r10, scene.gt_r12, est.r12)
    return {
        "experiment": "convergence",
        "mode": "general",
        "variant": "lines",
        "line_form": form,
        "noise": spec.noise,
        "deviation_deg": deviation_deg,
        "n_points": 0,
        "n_lines": spec.n_lines,
        "trial": trial,
        "seed": seed,
        "e_rot_deg": e_rot,
        "e_t_deg": float("nan"),
        "degenerate": False,
        "failed": False,
        "converged": bool(est.diagnostics.get("irls_converged", True)),
        "time_total_ms": 1e3 * (time.perf_counter() - t0),
        "config": json.dumps({"scenario": asdict(cfg), "deviation_deg": deviation_deg}),
        "success": bool(e_rot < 0.5),
    }


def _ligt_trial(task):
    spec, rot_noise_deg, noise, variant, trial = task
    seed = _trial_seed(spec.seed, 3, rot_noise_deg, noise, trial)
    cfg = ScenarioConfig(
        n_points=spec.n_points, n_lines=spec.n_lines, noise_std=noise, rng_seed=seed
    )
    scene = generate_scene(cfg)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, 8))))
    dr1 = random_rotation_about_random_axis(rng, np.radians(rot_noise_deg))
    dr2 = random_rotation_about_random_axis(rng, np.radians(rot_noise_deg))
    R10 = dr1 @ scene.gt_r10
    R12 = dr2 @ scene.gt_r12
    points = stack_point_tracks(scene.point_tracks)
    lines = stack_line_tracks(scene.line_tracks)
    rows = []
    cheir = None
    if variant in ("points", "both"):
        rows.append(point_constraint_rows(points["rays"], R10, R12, points["observed"]))
        cheir = (points["bearings"][:, 0], points["bearings"][:, 1], R10)
    if variant in ("lines", "both"):
        dirs, valid = estimate_line_directions(lines["normals"], R10, R12)
        rows.append(line_constraint_rows(lines["normals"], dirs, valid, R10, R12))
    A = np.concatenate([r for r in rows if r.shape[0]], axis=0)
    row = {
        "experiment": "ligt_resilience",
        "mode": "general",
        "variant": variant,
        "noise": noise,
        "rot_noise_deg": rot_noise_deg,
        "n_points": spec.n_points,
        "n_lines": spec.n_lines,
        "trial": trial,
        "seed": seed,
        "e_rot_deg": 2.0 * rot_noise_deg,
        "config": json.dumps({"scenario": asdict(cfg), "rot_noise_deg": rot_noise_deg}),
    }
    t0 = time.perf_counter()
    try:
        sol = solve_global_translations(A, cheirality=cheir)
    except ValueError:
        row.update(e_t_deg=float("nan"), degenerate=True, failed=True, converged=False)
        row["time_total_ms"] = 1e3 * (time.perf_counter() - t0)
        return row
    if sol.degenerate:
        row.update(e_t_deg=float("nan"), degenerate=True, failed=False, converged=True)
    else:
        t01, t12 = scene.gt_relative_translations
        e01, e12 = relative_from_global(sol, R10)
        e_t = translation_direction_error(t01, e01, t12, e12)
        if not sol.sign_fixed:
            e_t = min(e_t, translation_direction_error(t01, -e01, t12, -e12))
        row.update(e_t_deg=e_t, degenerate=False, failed=False, converged=True)
    row["time_total_ms"] = 1e3 * (time.perf_counter() - t0)
    return row


def _run_tasks(fn, tasks, jobs: int):
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, tasks, chunksize=8))
    return [fn(t) for t in tasks]


def _write_rows(rows, path, extra_columns=()):
    if path is None:
        return
    cols = CSV_COLUMNS + [c for c in extra_columns if c not in CSV_COLUMNS]
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=cols, restval="")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in cols})


def summarize(rows, group_keys, value_keys=("e_rot_deg", "e_t_deg")):
    """Mean of the value columns per group, ignoring NaN/failed trials."""
    groups: dict = {}
    for row in rows:
        key = tuple(row.get(k) for k in group_keys)
        groups.setdefault(key, []).append(row)
    out = {}
    for key, rs in sorted(groups.items(), key=lambda kv: str(kv[0])):
        stats = {"trials": len(rs), "failed": sum(bool(r.get("failed")) for r in rs)}
        for vk in value_keys:
            vals = np.array([r.get(vk, np.nan) for r in rs], dtype=float)
            vals = vals[np.isfinite(vals)]
            stats[f"mean_{vk}"] = float(vals.mean()) if vals.size else float("nan")
            stats[f"median_{vk}"] = float(np.median(vals)) if vals.size else float("nan")
        out[key] = stats
    return out


def run_noise_sweep(spec: ExperimentSpec):
    """Mean pose errors vs noise level per variant and scene mode."""
    tasks = [
        (spec, mode, noise, variant, trial)
        for mode in spec.modes
        for noise in spec.noise_grid
        for variant in spec.variants
        for trial in range(spec.trials)
    ]
    rows = _run_tasks(_noise_trial, tasks, spec.jobs)
    _write_rows(rows, spec.out)
    return rows, summarize(rows, ("mode", "variant", "noise"))


def run_outlier_sweep(spec: ExperimentSpec):
    """Robust-pipeline errors and timing vs outlier fraction."""
    tasks = [
        (spec, fraction, variant, trial)
        for fraction in spec.outlier_grid
        for variant in spec.variants
        for trial in range(spec.trials)
    ]
    rows = _run_tasks(_outlier_trial, tasks, spec.jobs)
    _write_rows(rows, spec.out, extra_columns=("outlier_tp", "outlier_fp", "outlier_fn"))
    return rows, summarize(rows, ("variant", "outlier_fraction"))


def run_convergence_test(spec: ExperimentSpec):
    """Success rate vs initialization deviation for the two line residual forms."""
    tasks = [
        (spec, dev, form, trial)
        for dev in spec.deviation_grid_deg
        for form in spec.line_forms
        for trial in range(spec.trials)
    ]
    rows = _run_tasks(_convergence_trial, tasks, spec.jobs)
    _write_rows(rows, spec.out, extra_columns=("success",))
    summary = summarize(rows, ("line_form", "deviation_deg"))
    for key, rs in [
        (k, [r for r in rows if (r["line_form"], r["deviation_deg"]) == k]) for k in summary
    ]:
        summary[key]["success_rate"] = float(np.mean([r["success"] for r in rs]))
    return rows, summary


def run_ligt_resilience(spec: ExperimentSpec):
    """Translation error vs rotation perturbation and vs observation noise.

    Rotation resilience uses the noiseless grid ``rot_noise_grid_deg``;
    noise resilience fixes the rotations at truth and sweeps ``noise_grid``.
    """
    tasks = [
        (spec, rot, 0.0, variant, trial)
        for rot in spec.rot_noise_grid_deg
        for variant in spec.ligt_variants
        for trial in range(spec.trials)
    ]
    tasks += [
        (spec, 0.0, noise, variant, trial)
        for noise in spec.noise_grid
        if noise > 0.0
        for variant in spec.ligt_variants
        for trial in range(spec.trials)
    ]
    rows = _run_tasks(_ligt_trial, tasks, spec.jobs)
    _write_rows(rows, spec.out)
    return rows, summarize(rows, ("variant", "rot_noise_deg", "noise"), ("e_t_deg",))


def export_cost_landscape(
    spec: ExperimentSpec,
    truth_cayley: tuple = (0.2, 0.2, 0.2),
    half_width: float = 0.4,
    steps: int = 41,
):
    """Line-only cost over a Cayley grid with one rotation fixed at truth.

    The ground-truth first rotation is placed at ``truth_cayley``; the grid
    sweeps its x/y components with z fixed at the truth value.  Returns
    ``(xs, ys, cost[form][j, i])`` per residual form and writes a CSV when
    ``spec.out`` is set.
    """
    from .irls import build_problem

    c_truth = np.asarray(truth_cayley, dtype=float)
    R10 = cayley_to_rotation(c_truth)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((spec.seed, 11))))
    R21 = cayley_to_rotation(rng.uniform(-0.3, 0.3, 3))
    centers = np.stack([np.zeros(3), rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3) + 1.0])
    cfg = ScenarioConfig(
        n_points=0, n_lines=spec.n_lines, noise_std=spec.noise, rng_seed=spec.seed
    )
    scene = generate_scene(cfg, poses=(R10, R21.T, centers))
    lines = stack_line_tracks(scene.line_tracks)
    c12 = rotation_to_cayley(scene.gt_r12)

    xs = c_truth[0] + np.linspace(-half_width, half_width, steps)
    ys = c_truth[1] + np.linspace(-half_width, half_width, steps)
    grids = {}
    for form in spec.line_forms:
        problem = build_problem(None, lines, line_form=form)
        states = np.zeros((steps * steps, 6))
        gx, gy = np.meshgrid(xs, ys)
        states[:, 0] = gx.ravel()
        states[:, 1] = gy.ravel()
        states[:, 2] = c_truth[2]
        states[:, 3:] = c12
        grids[form] = problem.cost(states).reshape(steps, steps)
    if spec.out:
        with open(spec.out, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["form", "cx", "cy", "cost"])
            for form, grid in grids.items():
                for j, y in enumerate(ys):
                    for i, x in enumerate(xs):
                        writer.writerow([form, x, y, grid[j, i]])
    return xs, ys, grids
