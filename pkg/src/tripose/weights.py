"""Observation-uncertainty models and residual-variance weights.

Line observations carry a closed-form covariance over their polar
parameters ``(theta, rho)`` derived from endpoint noise perpendicular to
the segment; it is pushed through the back-projection into a 3x3 covariance
of the unit plane normal by an unscented transform.  Point and line terms
of the rotation cost are then reweighted by the inverse first-order
variance of their residuals, clamped so zero-variance (noise-free)
terms cannot blow up the reweighted problem.
"""

from __future__ import annotations

import warnings

import numpy as np

from ._vec import cross3

__all__ = [
    "WEIGHT_MIN",
    "WEIGHT_MAX",
    "line_parameter_covariance",
    "normal_covariance_unscented",
    "normalize_weights",
    "line_weights",
    "point_weights",
]

WEIGHT_MIN = 1e-4
WEIGHT_MAX = 1e8

_UT_KAPPA = 1.0  # sigma-point spread for the 2D unscented transform


def line_parameter_covariance(sigma: np.ndarray, c: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Covariance of the polar line parameters ``(theta, rho)``, batched.

    ``sigma`` is the endpoint noise std perpendicular to the segment, ``c``
    the segment length and ``d`` the signed foot-to-midpoint offset:

        [[ 2 s^2 / c^2,            -2 d s^2 / c^2          ],
         [-2 d s^2 / c^2,  (1/2 + 2 d^2 / c^2) s^2         ]]
    """
    sigma = np.asarray(sigma, dtype=float)
    c = np.asarray(c, dtype=float)
    d = np.asarray(d, dtype=float)
    if np.any(c < 1e-6):
        raise ValueError("degenerate segment: length below 1e-6 px")
    s2 = sigma**2
    out = np.empty(np.broadcast(sigma, c, d).shape + (2, 2))
    out[..., 0, 0] = 2.0 * s2 / c**2
    out[..., 0, 1] = -2.0 * d * s2 / c**2
    out[..., 1, 0] = out[..., 0, 1]
    out[..., 1, 1] = (0.5 + 2.0 * d**2 / c**2) * s2
    return out


def _cholesky2_with_guard(cov: np.ndarray) -> np.ndarray:
    """Lower Cholesky factors of 2x2 PSD matrices, regularizing on failure."""
    a = cov[..., 0, 0]
    b = cov[..., 0, 1]
    c = cov[..., 1, 1]
    bad = (a < 0.0) | (c < 0.0) | (a * c - b * b < -1e-18 * np.maximum(a * c, 1.0))
    if np.any(bad):
        warnings.warn("line covariance not PSD; regularized with 1e-12 I")
    a = np.where(bad | (a <= 0.0), a + 1e-12, a)
    c = np.where(bad, c + 1e-12, c)
    l11 = np.sqrt(np.maximum(a, 0.0))
    l21 = np.where(l11 > 0.0, b / np.where(l11 > 0.0, l11, 1.0), 0.0)
    rem = np.maximum(c - l21**2, 0.0)
    l22 = np.sqrt(rem)
    L = np.zeros(cov.shape)
    L[..., 0, 0] = l11
    L[..., 1, 0] = l21
    L[..., 1, 1] = l22
    return L


def normal_covariance_unscented(theta, rho, cov2: np.ndarray, intr) -> np.ndarray:
    """Covariance of the unit back-projected normal under ``(theta, rho)`` noise.

    Sigma points of the 2D polar-parameter distribution are pushed through
    the line incidence vector and ``K^T l / |K^T l|``; the returned 3x3
    matrices are symmetric PSD with the normal direction in the (near-)null
    space.  Batched over leading axes.
    """
    theta = np.asarray(theta, dtype=float)
    rho = np.asarray(rho, dtype=float)
    cov2 = np.asarray(cov2, dtype=float)
    L = _cholesky2_with_guard(cov2) * np.sqrt(2.0 + _UT_KAPPA)
    # 5 sigma points: mean, +/- each scaled Cholesky column.
    mu = np.stack([theta, rho], axis=-1)[..., None, :]
    offsets = np.concatenate(
        [
            np.zeros(cov2.shape[:-2] + (1, 2)),
            np.swapaxes(L, -1, -2),
            -np.swapaxes(L, -1, -2),
        ],
        axis=-2,
    )
    pts = mu + offsets  # (..., 5, 2)
    l = np.stack(
        [np.sin(pts[..., 0]), -np.cos(pts[..., 0]), pts[..., 1]], axis=-1
    )
    y = np.einsum("ji,...j->...i", intr.K, l)
    n = y / np.linalg.norm(y, axis=-1, keepdims=True)
    w0 = _UT_KAPPA / (2.0 + _UT_KAPPA)
    wi = 0.5 / (2.0 + _UT_KAPPA)
    wts = np.array([w0, wi, wi, wi, wi])
    mean = np.einsum("s,...si->...i", wts, n)
    dev = n - mean[..., None, :]
    return np.einsum("s,...si,...sj->...ij", wts, dev, dev)


def _clamp(w: np.ndarray) -> np.ndarray:
    return np.clip(w, WEIGHT_MIN, WEIGHT_MAX)


def normalize_weights(*groups: np.ndarray | None) -> tuple:
    """Jointly rescale raw inverse-variance weights and clamp.

    All groups are divided by one common factor (the median of the finite
    raw values), which leaves the weighted optimum unchanged but lets the
    clamp act on the relative spread instead of absolute magnitudes; only
    then are zero-variance terms (infinite raw weight) capped.
    """
    finite = [g[np.isfinite(g)] for g in groups if g is not None and g.size]
    vals = np.concatenate(finite) if finite else np.zeros(0)
    scale = float(np.median(vals)) if vals.size else 1.0
    if not np.isfinite(scale) or scale <= 0.0:
        scale = 1.0
    out = []
    for g in groups:
        if g is None:
            out.append(None)
            continue
        w = np.where(np.isfinite(g), g / scale, np.inf)
        out.append(_clamp(np.where(np.isfinite(w), w, WEIGHT_MAX)))
    return tuple(out)


def line_weights(
    normals: np.ndarray,
    normal_cov: np.ndarray,
    R10: np.ndarray,
    R12: np.ndarray,
    clamped: bool = True,
) -> np.ndarray:
    """Inverse first-order variance of the triple-product line residual.

    Args:
        normals: ``(n, 3, 3)`` unit plane normals in their own frames.
        normal_cov: ``(n, 3, 3, 3)`` covariance of each normal.
        R10, R12: current relative rotations into the middle frame.
        clamped: clamp to ``[WEIGHT_MIN, WEIGHT_MAX]`` (default); raw
            inverse variances (``inf`` for zero variance) otherwise.

    Returns:
        ``(n,)`` weights.
    """
    n0 = np.einsum("ij,nj->ni", R10, normals[:, 0])
    n1 = normals[:, 1]
    n2 = np.einsum("ij,nj->ni", R12, normals[:, 2])
    # Residual e = n0 . (n1 x n2); gradients w.r.t. each normal in its own
    # frame pick up the transpose of the rotation that moved it to frame 1.
    g1f = cross3(n2, n0)
    g0 = np.einsum("ji,nj->ni", R10, cross3(n1, n2))
    g2 = np.einsum("ji,nj->ni", R12, cross3(n0, n1))
    var = (
        np.einsum("ni,nij,nj->n", g0, normal_cov[:, 0], g0)
        + np.einsum("ni,nij,nj->n", g1f, normal_cov[:, 1], g1f)
        + np.einsum("ni,nij,nj->n", g2, normal_cov[:, 2], g2)
    )
    raw = np.where(var > 0.0, 1.0 / np.where(var > 0.0, var, 1.0), np.inf)
    return _clamp(np.where(np.isfinite(raw), raw, WEIGHT_MAX)) if clamped else raw


def point_weights(
    b_ref: np.ndarray,
    b_other: np.ndarray,
    jac_ref: np.ndarray,
    jac_other: np.ndarray,
    cov_ref: np.ndarray,
    cov_other: np.ndarray,
    R: np.ndarray,
    t_dir: np.ndarray,
    clamped: bool = True,
) -> np.ndarray:
    """Inverse first-order variance of the epipolar residual ``t . (b x R b')``.

    Pixel noise in both observations is propagated through the unit-bearing
    map into the scalar residual, with the current translation direction
    ``t_dir`` held fixed.  Returns ``(m,)`` weights, clamped by default.
    """
    rb = np.einsum("ij,mj->mi", R, b_other)
    de_dref = cross3(rb, t_dir)
    de_drot = cross3(t_dir, b_ref)
    de_dother = np.einsum("ji,mj->mi", R, de_drot)
    jr = np.einsum("mi,mik->mk", de_dref, jac_ref)
    jo = np.einsum("mi,mik->mk", de_dother, jac_other)
    var = np.einsum("mk,mkl,ml->m", jr, cov_ref, jr) + np.einsum(
        "mk,mkl,ml->m", jo, cov_other, jo
    )
    raw = np.where(var > 0.0, 1.0 / np.where(var > 0.0, var, 1.0), np.inf)
    return _clamp(np.where(np.isfinite(raw), raw, WEIGHT_MAX)) if clamped else raw
