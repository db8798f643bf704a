"""Iteratively reweighted rotation refinement.

Each outer loop solves the weighted combined problem to convergence, then
refreshes the weights at the new rotations: line weights from the propagated
normal covariances, point weights from the pixel covariances and a
translation direction recomputed by the linear translation solver (falling
back to the fitted coplanarity direction when the translation is
degenerate).  All weights start at 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .costs import RotationProblem
from .lm import LMReport, lm_minimize
from .rotations import cayley_to_rotation
from .translation import (
    estimate_line_directions,
    line_constraint_rows,
    point_constraint_rows,
    solve_global_translations,
)
from .weights import line_weights, normalize_weights, point_weights

__all__ = ["IrlsResult", "irls_solve", "build_problem"]

DEFAULT_IRLS_LOOPS = 5


@dataclass
class IrlsResult:
    state: np.ndarray  # (6,) final Cayley state
    reports: list[LMReport]
    weights: dict  # final weights per term group
    converged: bool


def build_problem(
    points: dict | None,
    lines: dict | None,
    w01=None,
    w12=None,
    w_line=None,
    line_form: str = "triple",
) -> RotationProblem:
    """Assemble a :class:`RotationProblem` from stacked track arrays."""
    kw = dict(line_form=line_form, w01=w01, w12=w12, w_line=w_line)
    if points is not None and points["bearings"].shape[0]:
        i01, i12 = points["idx01"], points["idx12"]
        kw.update(
            b1_01=points["bearings"][i01, 1],
            b0_01=points["bearings"][i01, 0],
            b1_12=points["bearings"][i12, 1],
            b2_12=points["bearings"][i12, 2],
        )
    if lines is not None and lines["normals"].shape[0]:
        kw.update(line_normals=lines["normals"])
    return RotationProblem(**kw)


def _pair_directions(points, lines, state, problem):
    """Translation directions for point reweighting, in frame 1.

    Tries the linear global-translation solve on the current rotations and
    falls back to the fitted coplanarity directions when degenerate.
    """
    R10 = cayley_to_rotation(state[:3])
    R12 = cayley_to_rotation(state[3:])
    rows = []
    if points is not None and points["bearings"].shape[0]:
        rows.append(point_constraint_rows(points["rays"], R10, R12, points["observed"]))
    if lines is not None and lines["normals"].shape[0]:
        dirs, valid = estimate_line_directions(lines["normals"], R10, R12)
        rows.append(line_constraint_rows(lines["normals"], dirs, valid, R10, R12))
    t01 = t12 = None
    if rows:
        A = np.concatenate(rows, axis=0)
        if A.shape[0] >= 5:
            sol = solve_global_translations(A)
            if not sol.degenerate:
                d01 = -R10 @ sol.translations[1]
                d12 = R10 @ (sol.translations[2] - sol.translations[1])
                if np.linalg.norm(d01) > 1e-12:
                    t01 = d01 / np.linalg.norm(d01)
                if np.linalg.norm(d12) > 1e-12:
                    t12 = d12 / np.linalg.norm(d12)
    if t01 is None and problem.last_dir01 is not None:
        t01 = problem.last_dir01[0]
    if t12 is None and problem.last_dir12 is not None:
        t12 = problem.last_dir12[0]
    return t01, t12


def irls_solve(
    points: dict | None,
    lines: dict | None,
    init: np.ndarray,
    n_loops: int = DEFAULT_IRLS_LOOPS,
    line_form: str = "triple",
    weighted: bool = True,
    max_iterations: int = 100,
    grad_tol: float = 1e-13,
    step_tol: float = 1e-14,
) -> IrlsResult:
    """Run the reweighted solve from ``init`` (Cayley 6-vector).

    With ``weighted=False`` this is a single unweighted solve regardless of
    ``n_loops``.  The inner solves use tighter-than-default termination so
    noise-free problems reach full precision.  Non-convergence of any inner
    solve is recorded (with its loop index) in the reports, never silently
    dropped.
    """
    state = np.asarray(init, dtype=float).reshape(6).copy()
    w01 = w12 = w_line = None
    reports: list[LMReport] = []
    problem = None
    loops = n_loops if weighted else 1
    all_noisefree = (points is None or not np.any(points["pixel_cov"])) and (
        lines is None or not np.any(lines["normal_cov"])
    )
    prev = None
    for loop in range(loops):
        problem = build_problem(points, lines, w01, w12, w_line, line_form)
        x, rep = lm_minimize(
            problem, state, max_iterations=max_iterations, grad_tol=grad_tol, step_tol=step_tol
        )
        state = x[0]
        reports.append(rep)
        if not weighted or loop == loops - 1:
            break
        R10 = cayley_to_rotation(state[:3])
        R12 = cayley_to_rotation(state[3:])
        if all_noisefree:
            # Zero covariance everywhere: every raw weight is infinite, so
            # the reweighted problem equals the first solve; stop here.
            break
        w_line = None
        if lines is not None and lines["normals"].shape[0]:
            w_line = line_weights(
                lines["normals"], lines["normal_cov"], R10, R12, clamped=False
            )
        w01 = w12 = None
        if points is not None and points["bearings"].shape[0]:
            i01, i12 = points["idx01"], points["idx12"]
            t01, t12 = _pair_directions(points, lines, state, problem)
            if t01 is not None and i01.size:
                w01 = point_weights(
                    points["bearings"][i01, 1],
                    points["bearings"][i01, 0],
                    points["jac"][i01, 1],
                    points["jac"][i01, 0],
                    points["pixel_cov"][i01, 1],
                    points["pixel_cov"][i01, 0],
                    R10,
                    t01,
                    clamped=False,
                )
            if t12 is not None and i12.size:
                w12 = point_weights(
                    points["bearings"][i12, 1],
                    points["bearings"][i12, 2],
                    points["jac"][i12, 1],
                    points["jac"][i12, 2],
                    points["pixel_cov"][i12, 1],
                    points["pixel_cov"][i12, 2],
                    R12,
                    t12,
                    clamped=False,
                )
        w01, w12, w_line = normalize_weights(w01, w12, w_line)
        # Reweighting reached a fixed point: further loops cannot move.
        cur = np.concatenate([w for w in (w01, w12, w_line) if w is not None])
        if prev is not None and cur.shape == prev.shape and np.allclose(
            cur, prev, rtol=1e-9, atol=0.0
        ):
            break
        prev = cur
    return IrlsResult(
        state=state,
        reports=reports,
        weights={"point_01": w01, "point_12": w12, "line": w_line},
        converged=all(bool(r.converged.all()) for r in reports),
    )
