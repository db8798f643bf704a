"""Linear recovery of the three global translations given the rotations.

Every feature contributes linear rows ``B t0 + C t1 + D t2 = 0`` over the
global translations.  Point rows come from the pairwise epipolar constraints
written with calibrated homogeneous coordinates; line rows come from the
trifocal incidence of the three back-projected planes, with the noisy
direction factors replaced by the estimated 3D line direction so only
magnitudes and signs of the two coefficient vectors survive.

``D = -(B + C)`` holds bitwise by construction, which makes any common
translation ``(v, v, v)`` an exact null direction of the stacked system.
The solver works in the 6-dimensional complement of that gauge subspace,
takes the smallest singular vector, and fixes the remaining gauge by
``t0 = 0``, ``|t1| = 1`` and a cheirality vote for the overall sign.

Frame convention: frame 0 is the world gauge (``R_0G = I``), so
``R_1G = R10`` and ``R_2G = R12^T R10``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._vec import cross3
from .eig3 import min_eigpair_fast

__all__ = [
    "LINE_DIRECTION_MAX_EIG",
    "TranslationSolution",
    "point_constraint_rows",
    "estimate_line_directions",
    "line_constraint_rows",
    "solve_global_translations",
    "relative_from_global",
]

LINE_DIRECTION_MAX_EIG = 0.05  # lines with a larger min eigenvalue are removed
_ROW_EPS = 1e-12
_DEGENERATE_SV_RATIO = 1e-8


@dataclass
class TranslationSolution:
    """Gauge-fixed global translations ``t0 = 0``, ``|t1| = 1``."""

    translations: np.ndarray | None  # (3, 3) rows t0, t1, t2; None if degenerate
    degenerate: bool
    singular_values: np.ndarray  # of the gauge-reduced system, descending
    sign_fixed: bool = True  # False when no cheirality information was available
    n_rows: int = 0

    @property
    def t1(self) -> np.ndarray:
        return self.translations[1]

    @property
    def t2(self) -> np.ndarray:
        return self.translations[2]


def _frame_rotations(R10: np.ndarray, R12: np.ndarray):
    R10 = np.asarray(R10, dtype=float)
    R12 = np.asarray(R12, dtype=float)
    R1G = R10
    R2G = R12.T @ R10
    return R1G, R2G


def point_constraint_rows(
    rays: np.ndarray, R10: np.ndarray, R12: np.ndarray, observed: np.ndarray | None = None
) -> np.ndarray:
    """Pairwise epipolar rows for point tracks, stacked as ``(n_rows, 9)``.

    Args:
        rays: ``(m, 3, 3)`` calibrated homogeneous coordinates per frame
            (NaN rows for unobserved frames).
        observed: optional ``(m, 3)`` mask; inferred from NaNs if omitted.

    One scalar row is emitted per observed frame pair (01, 02, 12); each row
    is normalized to unit norm and rows below ``1e-12`` are dropped.
    """
    rays = np.asarray(rays, dtype=float)
    if observed is None:
        observed = ~np.isnan(rays[:, :, 0])
    R1G, R2G = _frame_rotations(R10, R12)
    R01 = np.asarray(R10).T
    R02 = np.asarray(R10).T @ np.asarray(R12)
    R12m = np.asarray(R12)

    rows = []
    f0, f1, f2 = rays[:, 0], rays[:, 1], rays[:, 2]

    def emit(a, neg_block, pos_block):
        # Constraint a . (t_pos - t_neg) = 0; the third block is exactly
        # zero, which is D = -(B + C) bitwise.
        out = np.zeros((a.shape[0], 9))
        out[:, 3 * neg_block : 3 * neg_block + 3] = -a
        out[:, 3 * pos_block : 3 * pos_block + 3] = a
        rows.append(out)

    m01 = observed[:, 0] & observed[:, 1]
    if m01.any():
        emit(cross3(f0[m01], np.einsum("ij,mj->mi", R01, f1[m01])), 0, 1)
    m02 = observed[:, 0] & observed[:, 2]
    if m02.any():
        emit(cross3(f0[m02], np.einsum("ij,mj->mi", R02, f2[m02])), 0, 2)
    m12 = observed[:, 1] & observed[:, 2]
    if m12.any():
        a = np.einsum(
            "mi,ij->mj",
            cross3(f1[m12], np.einsum("ij,mj->mi", R12m, f2[m12])),
            R1G,
        )
        emit(a, 1, 2)

    if not rows:
        return np.zeros((0, 9))
    return _normalize_rows(np.concatenate(rows, axis=0))


def _normalize_rows(A: np.ndarray) -> np.ndarray:
    """Unit row norms, dropping degenerate rows and keeping D = -(B + C)
    exact in floating point (re-derived after the division)."""
    norms = np.linalg.norm(A, axis=1)
    A = A[norms >= _ROW_EPS] / norms[norms >= _ROW_EPS, None]
    A[:, 6:] = -(A[:, :3] + A[:, 3:6])
    return A


def estimate_line_directions(
    line_normals: np.ndarray,
    R10: np.ndarray,
    R12: np.ndarray,
    max_min_eig: float = LINE_DIRECTION_MAX_EIG,
):
    """Per-line direction estimates in frame 0 from the coplanarity matrices.

    Returns ``(directions (n, 3), valid (n,))``; lines whose smallest
    eigenvalue exceeds ``max_min_eig`` are marked invalid and must be
    excluded from the translation system.
    """
    normals = np.asarray(line_normals, dtype=float)
    R10 = np.asarray(R10, dtype=float)
    R12 = np.asarray(R12, dtype=float)
    rot = np.stack(
        [
            np.einsum("ij,nj->ni", R10, normals[:, 0]),
            normals[:, 1],
            np.einsum("ij,nj->ni", R12, normals[:, 2]),
        ],
        axis=1,
    )
    M = np.einsum("nki,nkj->nij", rot, rot)
    lam, v1 = min_eigpair_fast(M)
    dirs = np.einsum("ji,nj->ni", R10, v1)  # rotate into frame 0
    idx = np.argmax(np.abs(dirs), axis=1)
    sign = np.where(dirs[np.arange(dirs.shape[0]), idx] < 0.0, -1.0, 1.0)
    return dirs * sign[:, None], lam <= max_min_eig


def line_constraint_rows(
    line_normals: np.ndarray,
    directions: np.ndarray,
    valid: np.ndarray,
    R10: np.ndarray,
    R12: np.ndarray,
) -> np.ndarray:
    """Trifocal translation rows for line tracks, stacked as ``(n_rows, 9)``.

    ``directions`` are unit line directions in frame 0 (see
    :func:`estimate_line_directions`); rows are invariant to their sign up
    to an overall factor.  Lines where both coefficient magnitudes vanish
    (parallel to both epipolar-plane intersections) are dropped.
    """
    normals = np.asarray(line_normals, dtype=float)[valid]
    r0 = np.asarray(directions, dtype=float)[valid]
    if normals.shape[0] == 0:
        return np.zeros((0, 9))
    R1G, R2G = _frame_rotations(R10, R12)
    R01 = np.asarray(R10).T
    R02 = np.asarray(R10).T @ np.asarray(R12)

    n0, n1, n2 = normals[:, 0], normals[:, 1], normals[:, 2]
    u1 = cross3(n0, np.einsum("ij,nj->ni", R01, n1))
    u2 = cross3(n0, np.einsum("ij,nj->ni", R02, n2))
    m1 = np.linalg.norm(u1, axis=1)
    m2 = np.linalg.norm(u2, axis=1)
    keep = (m1 >= _ROW_EPS) | (m2 >= _ROW_EPS)
    if not keep.any():
        return np.zeros((0, 9))
    n0, n1, n2 = n0[keep], n1[keep], n2[keep]
    u1, u2, m1, m2, r0 = u1[keep], u2[keep], m1[keep], m2[keep], r0[keep]

    s1 = np.sign(np.einsum("ni,ni->n", r0, u1))
    s2 = np.sign(np.einsum("ni,ni->n", r0, u2))
    coef2 = np.einsum("ni,ij->nj", n2, R2G)  # n2^T R_2G
    coef1 = np.einsum("ni,ij->nj", n1, R1G)  # n1^T R_1G

    B = (s1 * m1)[:, None] * coef2 - (s2 * m2)[:, None] * coef1
    C = (s2 * m2)[:, None] * coef1
    D = -(B + C)
    return _normalize_rows(np.concatenate([B, C, D], axis=1))


_GAUGE = np.concatenate([np.eye(3)] * 3, axis=0) / np.sqrt(3.0)  # (9, 3)


def _gauge_complement() -> np.ndarray:
    """Orthonormal basis of the subspace orthogonal to common translations."""
    q, _ = np.linalg.qr(np.concatenate([_GAUGE, np.eye(9)], axis=1))
    return q[:, 3:9]


_Q_COMPL = _gauge_complement()


def solve_global_translations(
    rows: np.ndarray,
    cheirality: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
    degenerate_tol: float = _DEGENERATE_SV_RATIO,
) -> TranslationSolution:
    """Solve the stacked linear system for the three global translations.

    Args:
        rows: ``(N, 9)`` stacked constraint rows, N >= 5.
        cheirality: optional ``(b0, b1, R10)`` bearings of point tracks
            observed in frames 0 and 1 plus the rotation, used to pick the
            overall sign by majority positive triangulated depth.
        degenerate_tol: if the second-smallest singular value of the
            gauge-reduced system falls below ``tol * largest`` the problem
            is declared direction-degenerate (pure rotation).

    Returns:
        :class:`TranslationSolution`; ``translations`` is None when the
        degeneracy flag is raised.
    """
    rows = np.asarray(rows, dtype=float)
    if rows.shape[0] < 5:
        raise ValueError("need at least 5 constraint rows beyond the gauge space")
    S = rows @ _Q_COMPL  # (N, 6)
    _, sv, Vt = np.linalg.svd(S, full_matrices=False)
    if sv[-2] < degenerate_tol * sv[0]:
        return TranslationSolution(
            translations=None,
            degenerate=True,
            singular_values=sv,
            n_rows=rows.shape[0],
        )
    z = (_Q_COMPL @ Vt[-1]).reshape(3, 3)
    t = z - z[0]
    scale = np.linalg.norm(t[1])
    if scale < 1e-12:
        return TranslationSolution(
            translations=None,
            degenerate=True,
            singular_values=sv,
            n_rows=rows.shape[0],
        )
    t = t / scale

    sign_fixed = False
    if cheirality is not None:
        b0, b1, R10 = cheirality
        b0 = np.atleast_2d(b0)
        b1 = np.atleast_2d(b1)
        if b0.shape[0] > 0:
            vote = _cheirality_vote(b0, b1, np.asarray(R10, float), t[1])
            if vote != 0:
                if vote < 0:
                    t = -t
                sign_fixed = True
    return TranslationSolution(
        translations=t,
        degenerate=False,
        singular_values=sv,
        sign_fixed=sign_fixed,
        n_rows=rows.shape[0],
    )


def _cheirality_vote(b0: np.ndarray, b1: np.ndarray, R10: np.ndarray, t1: np.ndarray) -> int:
    """Majority vote of positive triangulated depths in frames 0 and 1.

    Midpoint triangulation of the rays from camera 0 (at the origin) and
    camera 1 (at ``t1`` in world coordinates) for the candidate sign, minus
    the count for the flipped sign.
    """
    d0 = b0
    d1 = np.einsum("ji,mj->mi", R10, b1)  # frame-1 bearings in world
    a = np.einsum("mi,mi->m", d0, d0)
    b = np.einsum("mi,mi->m", d0, d1)
    c = np.einsum("mi,mi->m", d1, d1)
    det = a * c - b * b
    ok = det > 1e-12
    e0 = np.einsum("mi,i->m", d0, t1)
    e1 = np.einsum("mi,i->m", d1, t1)
    # depth along each ray for translation +t1; flipping t flips both.
    s = (c * e0 - b * e1) / np.where(ok, det, 1.0)
    u = (b * e0 - a * e1) / np.where(ok, det, 1.0)
    plus = int(np.sum(ok & (s > 0) & (u > 0)))
    minus = int(np.sum(ok & (s < 0) & (u < 0)))
    return plus - minus


def relative_from_global(sol: TranslationSolution, R10: np.ndarray):
    """Unit relative translation directions ``(t_0->1 in frame 0, t_1->2 in frame 1)``.

    Raises ``ValueError`` on a degenerate (pure-rotation) solution.
    """
    if sol.degenerate or sol.translations is None:
        raise ValueError("translation solution is degenerate (pure rotation)")
    t01 = sol.translations[1] - sol.translations[0]
    t12 = np.asarray(R10, float) @ (sol.translations[2] - sol.translations[1])
    n01 = np.linalg.norm(t01)
    n12 = np.linalg.norm(t12)
    if n01 < 1e-15 or n12 < 1e-15:
        raise ValueError("zero relative translation; direction undefined")
    return t01 / n01, t12 / n12
