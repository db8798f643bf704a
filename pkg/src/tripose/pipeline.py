"""End-to-end robust three-view pose estimation.

Points and lines each get their own consensus stage: hypotheses are
non-minimal samples solved from the current best state plus a uniform
random Cayley variation (the first hypotheses start from zero), scored by
scale-free inlier residuals on all features of that type.  The initial
rotations are taken from the point stage when it produced enough inliers,
otherwise from the line stage; the pooled inliers are then refined by the
reweighted solver, and translations are recovered linearly from the refined
rotations.

Hypotheses are advanced in deterministic chunks (one batched optimizer run
per chunk) with a standard confidence-based early stop between chunks.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ._vec import cross3
from .costs import NORMAL_EPS, RotationProblem
from .eig3 import min_eigpair
from .irls import DEFAULT_IRLS_LOOPS, build_problem, irls_solve
from .lm import lm_minimize
from .rotations import cayley_to_rotation
from .tracks import stack_line_tracks, stack_point_tracks
from .translation import (
    TranslationSolution,
    estimate_line_directions,
    line_constraint_rows,
    point_constraint_rows,
    solve_global_translations,
)

__all__ = [
    "RansacConfig",
    "PoseEstimate",
    "EstimationFailure",
    "classify_point_inliers",
    "classify_line_inliers",
    "ransac_rotation",
    "refine_three_view_pose",
    "estimate_three_view_pose",
]

_PARALLAX_NOISE_RATIO = 5.0  # pipeline-level near-pure-rotation heuristic


class EstimationFailure(RuntimeError):
    """Robust estimation could not produce a pose; carries diagnostics."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class RansacConfig:
    """Consensus-stage parameters.

    ``point_threshold`` bounds ``|t . (b x R b')|`` for unit bearings,
    ``line_threshold`` bounds the unit-normal triple product.
    """

    sample_size: int = 10
    max_iterations: int = 200
    point_threshold: float = 2e-3
    line_threshold: float = 2e-3
    variation_magnitude: float = 0.1
    confidence: float = 0.99
    rng_seed: int = 0
    chunk_size: int = 48
    min_consensus_margin: int = 4
    irls_loops: int = DEFAULT_IRLS_LOOPS
    line_form: str = "triple"
    hypothesis_iterations: int = 16

    @property
    def min_consensus(self) -> int:
        return self.sample_size + self.min_consensus_margin


@dataclass
class PoseEstimate:
    """Final pose with inlier masks and per-stage diagnostics."""

    rotation_state: np.ndarray  # (6,) Cayley
    r10: np.ndarray
    r12: np.ndarray
    translation: TranslationSolution | None
    point_inliers: np.ndarray
    line_inliers: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def degenerate_translation(self) -> bool:
        return self.translation is None or self.translation.degenerate


def classify_point_inliers(points: dict, state: np.ndarray, threshold: float, t_dirs=None):
    """Inlier mask over point tracks at the given rotation state.

    The residual per frame pair is ``|t . (b x R b')|`` with unit bearings
    and a unit direction ``t`` (the supplied translation direction, else the
    fitted coplanarity direction); a track must pass in every pair it is
    observed in.  Returns ``(mask, residuals)``.
    """
    state = np.asarray(state, dtype=float).reshape(6)
    R10 = cayley_to_rotation(state[:3])
    R12 = cayley_to_rotation(state[3:])
    m = points["bearings"].shape[0]
    res = np.zeros(m)
    counted = np.zeros(m, dtype=bool)
    for pair, R in (("01", R10), ("12", R12)):
        idx = points[f"idx{pair}"]
        if idx.size == 0:
            continue
        other = 0 if pair == "01" else 2
        b_ref = points["bearings"][idx, 1]
        b_oth = points["bearings"][idx, other]
        u = np.cross(b_ref, np.einsum("ij,mj->mi", R, b_oth))
        if t_dirs is not None and t_dirs.get(pair) is not None:
            t = np.asarray(t_dirs[pair], dtype=float)
        else:
            keep = np.linalg.norm(u, axis=1) >= NORMAL_EPS
            M = np.einsum("m,mi,mj->ij", keep.astype(float), u, u)
            _, t = min_eigpair(M)
        r = np.abs(np.einsum("i,mi->m", t, u))
        res[idx] = np.maximum(res[idx], r)
        counted[idx] = True
    mask = counted & (res < threshold)
    return mask, res


def classify_line_inliers(lines: dict, state: np.ndarray, threshold: float):
    """Inlier mask over line tracks: unit-normal triple product below threshold."""
    state = np.asarray(state, dtype=float).reshape(6)
    R10 = cayley_to_rotation(state[:3])
    R12 = cayley_to_rotation(state[3:])
    n = lines["normals"]
    n0 = np.einsum("ij,nj->ni", R10, n[:, 0])
    n2 = np.einsum("ij,nj->ni", R12, n[:, 2])
    res = np.abs(np.einsum("ni,ni->n", n0, np.cross(n[:, 1], n2)))
    return res < threshold, res


def _score_hypotheses(points, lines, kind, xs, problem, cfg):
    """Inlier masks for a whole chunk of hypothesis states at once."""
    B = xs.shape[0]
    Rb = cayley_to_rotation(np.concatenate([xs[:, :3], xs[:, 3:]], axis=0))
    R10, R12 = Rb[:B], Rb[B:]
    if kind == "points":
        m = points["bearings"].shape[0]
        res = np.zeros((B, m))
        counted = np.zeros(m, dtype=bool)
        for pair, R, dirs in (
            ("01", R10, problem.last_dir01),
            ("12", R12, problem.last_dir12),
        ):
            idx = points[f"idx{pair}"]
            if idx.size == 0 or dirs is None:
                continue
            other = 0 if pair == "01" else 2
            b_ref = points["bearings"][idx, 1]
            b_oth = points["bearings"][idx, other]
            u = cross3(b_ref, np.matmul(b_oth, np.swapaxes(R, -1, -2)))
            rr = np.abs(np.einsum("bi,bmi->bm", dirs, u))
            res[:, idx] = np.maximum(res[:, idx], rr)
            counted[idx] = True
        masks = counted & (res < cfg.point_threshold)
        return masks
    nr = lines["normals"]
    n0 = np.einsum("bij,nj->bni", R10, nr[:, 0])
    n2 = np.einsum("bij,nj->bni", R12, nr[:, 2])
    res = np.abs(np.einsum("bni,bni->bn", n0, cross3(nr[None, :, 1], n2)))
    return res < cfg.line_threshold


def _sample_problem(points, lines, kind, picks, line_form):
    """Batched problem over one chunk of hypothesis samples.

    Point samples are drawn from tracks observed in all three frames, so
    the per-hypothesis pair memberships are equal-sized and stackable.
    """
    if kind == "points":
        b = points["bearings"]
        return RotationProblem(
            b1_01=np.stack([b[p, 1] for p in picks]),
            b0_01=np.stack([b[p, 0] for p in picks]),
            b1_12=np.stack([b[p, 1] for p in picks]),
            b2_12=np.stack([b[p, 2] for p in picks]),
            line_form=line_form,
        )
    return RotationProblem(
        line_normals=np.stack([lines["normals"][p] for p in picks]),
        line_form=line_form,
    )


def ransac_rotation(points: dict | None, lines: dict | None, kind: str, cfg: RansacConfig):
    """Consensus search over rotations using one feature type.

    Args:
        kind: ``"points"`` or ``"lines"``; the other dict may be None.

    Returns:
        ``(state, inlier_mask, report)`` of the best hypothesis.

    Raises:
        EstimationFailure: when no hypothesis reaches the minimum consensus.
    """
    rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence((cfg.rng_seed, 10 if kind == "points" else 11)))
    )
    if kind == "points":
        pool = np.intersect1d(points["idx01"], points["idx12"])
        n_score = points["bearings"].shape[0]
    else:
        pool = np.arange(lines["normals"].shape[0])
        n_score = pool.size
    if pool.size < cfg.sample_size:
        raise EstimationFailure(
            f"not enough {kind} for sampling ({pool.size} < {cfg.sample_size})"
        )

    best = {"count": -1, "cost": np.inf, "state": None, "mask": None, "index": -1}
    done = 0
    needed = cfg.max_iterations
    while done < min(needed, cfg.max_iterations):
        chunk = min(cfg.chunk_size, cfg.max_iterations - done)
        picks = [rng.choice(pool, size=cfg.sample_size, replace=False) for _ in range(chunk)]
        base = best["state"] if best["state"] is not None else np.zeros(6)
        x0 = base + rng.uniform(
            -cfg.variation_magnitude, cfg.variation_magnitude, size=(chunk, 6)
        )
        problem = _sample_problem(points, lines, kind, picks, cfg.line_form)
        # Hypotheses only need enough accuracy to separate inliers from
        # outliers (residual gap ~100x), so loose tolerances suffice.
        xs, rep = lm_minimize(
            problem,
            x0,
            max_iterations=cfg.hypothesis_iterations,
            grad_tol=1e-8,
            step_tol=1e-6,
        )
        problem.evaluate(xs, jac=False)  # refresh fitted directions per hypothesis
        masks = _score_hypotheses(points, lines, kind, xs, problem, cfg)
        counts = masks.sum(axis=1)
        for h in range(chunk):
            count = int(counts[h])
            cost = float(rep.cost[h])
            if count > best["count"] or (count == best["count"] and cost < best["cost"]):
                best = {
                    "count": count,
                    "cost": cost,
                    "state": xs[h].copy(),
                    "mask": masks[h],
                    "index": done + h,
                }
        done += chunk
        if best["count"] > 0:
            w = best["count"] / n_score
            denom = np.log(max(1.0 - w**cfg.sample_size, 1e-12))
            if denom < 0:
                needed = int(np.ceil(np.log(1.0 - cfg.confidence) / denom))
            else:
                needed = cfg.max_iterations

    report = {
        "hypotheses": done,
        "best_count": best["count"],
        "best_cost": best["cost"],
        "best_index": best["index"],
    }
    if best["count"] < cfg.min_consensus:
        raise EstimationFailure(
            f"{kind} consensus too small ({best['count']} < {cfg.min_consensus})",
            diagnostics=report,
        )
    return best["state"], best["mask"], report


def _translation_stage(points, lines, state, point_mask, line_mask):
    """Linear translation solve on inlier tracks; returns the solution."""
    R10 = cayley_to_rotation(state[:3])
    R12 = cayley_to_rotation(state[3:])
    rows = []
    cheir = None
    if points is not None and point_mask.any():
        sel = np.nonzero(point_mask)[0]
        rows.append(
            point_constraint_rows(
                points["rays"][sel], R10, R12, points["observed"][sel]
            )
        )
        both01 = sel[points["observed"][sel, 0] & points["observed"][sel, 1]]
        if both01.size:
            cheir = (points["bearings"][both01, 0], points["bearings"][both01, 1], R10)
    if lines is not None and line_mask.any():
        sel = np.nonzero(line_mask)[0]
        normals = lines["normals"][sel]
        dirs, valid = estimate_line_directions(normals, R10, R12)
        rows.append(line_constraint_rows(normals, dirs, valid, R10, R12))
    rows = [r for r in rows if r.shape[0]]
    if not rows:
        return None
    A = np.concatenate(rows, axis=0)
    if A.shape[0] < 5:
        return None
    return solve_global_translations(A, cheirality=cheir)


def _parallax_degenerate(points, state) -> bool:
    """Near-pure-rotation check: median ray parallax below the noise floor.

    The singular-value test in the linear solver only fires on exact
    degeneracy; with noise, rows built from noise-driven epipolar vectors
    look full rank, so the pipeline compares the median epipolar-normal
    magnitude against the propagated bearing noise level instead.
    """
    if points is None or points["bearings"].shape[0] == 0:
        return False
    state = np.asarray(state, dtype=float).reshape(6)
    mags = []
    noise = []
    for pair, R in (("01", cayley_to_rotation(state[:3])), ("12", cayley_to_rotation(state[3:]))):
        idx = points[f"idx{pair}"]
        if idx.size == 0:
            continue
        other = 0 if pair == "01" else 2
        u = np.cross(
            points["bearings"][idx, 1],
            np.einsum("ij,mj->mi", R, points["bearings"][idx, other]),
        )
        mags.append(np.linalg.norm(u, axis=1))
        # Per-track bearing noise scale from the stored pixel covariance.
        j = points["jac"][idx, other]
        c = points["pixel_cov"][idx, other]
        noise.append(np.sqrt(np.einsum("mik,mkl,mil->m", j, c, j)))
    if not mags:
        return False
    signal = float(np.median(np.concatenate(mags)))
    floor = float(np.median(np.concatenate(noise)))
    return signal < _PARALLAX_NOISE_RATIO * max(floor, 1e-9)


def refine_three_view_pose(
    point_tracks,
    line_tracks,
    init_state: np.ndarray,
    irls_loops: int = DEFAULT_IRLS_LOOPS,
    line_form: str = "triple",
    weighted: bool = True,
    use_points: bool = True,
    use_lines: bool = True,
) -> PoseEstimate:
    """Reweighted refinement from a given initial state (no consensus stage)."""
    t0 = time.perf_counter()
    points = stack_point_tracks(point_tracks) if (use_points and point_tracks) else None
    lines = stack_line_tracks(line_tracks) if (use_lines and line_tracks) else None
    if points is None and lines is None:
        raise EstimationFailure("no features given")
    result = irls_solve(
        points, lines, init_state, n_loops=irls_loops, line_form=line_form, weighted=weighted
    )
    t1 = time.perf_counter()
    pmask = np.ones(0 if points is None else points["bearings"].shape[0], dtype=bool)
    lmask = np.ones(0 if lines is None else lines["normals"].shape[0], dtype=bool)
    translation = None
    if not _parallax_degenerate(points, result.state):
        translation = _translation_stage(points, lines, result.state, pmask, lmask)
    t2 = time.perf_counter()
    return PoseEstimate(
        rotation_state=result.state,
        r10=cayley_to_rotation(result.state[:3]),
        r12=cayley_to_rotation(result.state[3:]),
        translation=translation,
        point_inliers=pmask,
        line_inliers=lmask,
        diagnostics={
            "irls_converged": result.converged,
            "lm_iterations": [int(r.iterations[0]) for r in result.reports],
            "final_cost": float(result.reports[-1].cost[0]),
            "timing_ms": {
                "irls": 1e3 * (t1 - t0),
                "translation": 1e3 * (t2 - t1),
                "total": 1e3 * (t2 - t0),
            },
        },
    )


def estimate_three_view_pose(point_tracks, line_tracks, cfg: RansacConfig) -> PoseEstimate:
    """Full robust pipeline: per-type consensus, pooled reweighted refinement,
    then the linear translation solve on the inliers.

    Raises :class:`EstimationFailure` when both consensus stages fail.  A
    degenerate (pure-rotation) translation is reported via the estimate, not
    an exception.
    """
    t_start = time.perf_counter()
    points = stack_point_tracks(point_tracks) if point_tracks else None
    lines = stack_line_tracks(line_tracks) if line_tracks else None
    n_pts = len(point_tracks) if point_tracks else 0
    n_lns = len(line_tracks) if line_tracks else 0
    diagnostics: dict = {"timing_ms": {}}

    point_res = line_res = None
    t0 = time.perf_counter()
    if points is not None and n_pts >= cfg.sample_size:
        try:
            point_res = ransac_rotation(points, None, "points", cfg)
            diagnostics["ransac_points"] = point_res[2]
        except EstimationFailure as err:
            diagnostics["ransac_points"] = {"failed": str(err), **err.diagnostics}
    diagnostics["timing_ms"]["ransac_points"] = 1e3 * (time.perf_counter() - t0)
    t0 = time.perf_counter()
    if lines is not None and n_lns >= cfg.sample_size:
        try:
            line_res = ransac_rotation(None, lines, "lines", cfg)
            diagnostics["ransac_lines"] = line_res[2]
        except EstimationFailure as err:
            diagnostics["ransac_lines"] = {"failed": str(err), **err.diagnostics}
    diagnostics["timing_ms"]["ransac_lines"] = 1e3 * (time.perf_counter() - t0)

    if point_res is None and line_res is None:
        raise EstimationFailure("both consensus stages failed", diagnostics)

    # Prefer the point-based initialization when it has enough support.
    if point_res is not None and int(point_res[1].sum()) >= cfg.sample_size:
        init_state = point_res[0]
        diagnostics["init_from"] = "points"
    else:
        init_state = (line_res or point_res)[0]
        diagnostics["init_from"] = "lines" if line_res is not None else "points"

    point_mask = (
        point_res[1]
        if point_res is not None
        else (
            classify_point_inliers(points, init_state, cfg.point_threshold)[0]
            if points is not None
            else np.zeros(0, dtype=bool)
        )
    )
    line_mask = (
        line_res[1]
        if line_res is not None
        else (
            classify_line_inliers(lines, init_state, cfg.line_threshold)[0]
            if lines is not None
            else np.zeros(0, dtype=bool)
        )
    )

    t0 = time.perf_counter()
    sel_points = None
    if points is not None and point_mask.any():
        sel = np.nonzero(point_mask)[0]
        sel_points = {k: points[k][sel] for k in ("bearings", "rays", "jac", "pixel_cov", "observed")}
        obs = sel_points["observed"]
        sel_points["idx01"] = np.nonzero(obs[:, 0] & obs[:, 1])[0]
        sel_points["idx12"] = np.nonzero(obs[:, 1] & obs[:, 2])[0]
    sel_lines = None
    if lines is not None and line_mask.any():
        sel = np.nonzero(line_mask)[0]
        sel_lines = {k: lines[k][sel] for k in ("normals", "normal_cov")}
    result = irls_solve(
        sel_points,
        sel_lines,
        init_state,
        n_loops=cfg.irls_loops,
        line_form=cfg.line_form,
        max_iterations=40,
        grad_tol=1e-9,
        step_tol=1e-10,
    )
    diagnostics["timing_ms"]["irls"] = 1e3 * (time.perf_counter() - t0)
    diagnostics["irls_converged"] = result.converged
    diagnostics["final_cost"] = float(result.reports[-1].cost[0])

    t0 = time.perf_counter()
    translation = None
    if not _parallax_degenerate(sel_points if sel_points is not None else points, result.state):
        translation = _translation_stage(points, lines, result.state, point_mask, line_mask)
    diagnostics["timing_ms"]["translation"] = 1e3 * (time.perf_counter() - t0)
    diagnostics["timing_ms"]["total"] = 1e3 * (time.perf_counter() - t_start)

    return PoseEstimate(
        rotation_state=result.state,
        r10=cayley_to_rotation(result.state[:3]),
        r12=cayley_to_rotation(result.state[3:]),
        translation=translation,
        point_inliers=point_mask,
        line_inliers=line_mask,
        diagnostics=diagnostics,
    )
