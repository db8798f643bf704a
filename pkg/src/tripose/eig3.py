"""Symmetric 3x3 eigen decomposition tuned for batched small-matrix use.

The closed-form trigonometric solution handles the common well-separated
case without LAPACK call overhead, which matters because the rotation cost
is re-decomposed on every optimizer step.  Matrices with clustered
eigenvalues (or a poor closed-form residual) fall back to cyclic Jacobi
sweeps.
"""

from __future__ import annotations

import numpy as np

from ._vec import cross3

__all__ = ["eigh3", "min_eigpair", "min_eigpair_fast"]

_GAP_TOL = 1e-12
_RESID_TOL = 1e-9


def _jacobi3(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi for one symmetric 3x3 matrix; eigenvalues ascending."""
    a = A.copy()
    V = np.eye(3)
    for _ in range(30):
        off = np.sqrt(a[0, 1] ** 2 + a[0, 2] ** 2 + a[1, 2] ** 2)
        if off <= 1e-15 * max(1.0, np.abs(np.diag(a)).max()):
            break
        for p, q in ((0, 1), (0, 2), (1, 2)):
            if a[p, q] == 0.0:
                continue
            tau = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
            t = np.sign(tau) / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
            if tau == 0.0:
                t = 1.0
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            J = np.eye(3)
            J[p, p] = J[q, q] = c
            J[p, q] = s
            J[q, p] = -s
            a = J.T @ a @ J
            V = V @ J
    w = np.diag(a).copy()
    order = np.argsort(w)
    return w[order], V[:, order]


def _canonical_sign(V: np.ndarray) -> np.ndarray:
    """Flip eigenvector signs so the largest-magnitude component is positive."""
    idx = np.argmax(np.abs(V), axis=-2)
    picked = np.take_along_axis(V, idx[..., None, :], axis=-2)[..., 0, :]
    sign = np.where(picked < 0.0, -1.0, 1.0)
    return V * sign[..., None, :]


def eigh3(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigen decomposition of symmetric 3x3 matrices, batched.

    Args:
        A: array of shape ``(..., 3, 3)``; only the symmetric part is used.

    Returns:
        ``(w, V)`` with eigenvalues ``w`` ascending along the last axis and
        eigenvectors in the columns of ``V`` (``V[..., :, k]``), each with
        its largest-magnitude component made positive.
    """
    A = np.asarray(A, dtype=float)
    batch = A.shape[:-2]
    Af = 0.5 * (A + np.swapaxes(A, -1, -2)).reshape((-1, 3, 3))
    n = Af.shape[0]

    q = np.trace(Af, axis1=-2, axis2=-1) / 3.0
    p1 = Af[:, 0, 1] ** 2 + Af[:, 0, 2] ** 2 + Af[:, 1, 2] ** 2
    dq = Af[:, [0, 1, 2], [0, 1, 2]] - q[:, None]
    p2 = np.einsum("ni,ni->n", dq, dq) + 2.0 * p1
    p = np.sqrt(np.maximum(p2, 0.0) / 6.0)

    w = np.empty((n, 3))
    safe = p > 0.0
    # p == 0: already a multiple of the identity.
    w[~safe] = q[~safe, None]

    if np.any(safe):
        B = (Af[safe] - q[safe, None, None] * np.eye(3)) / p[safe, None, None]
        detB = (
            B[:, 0, 0] * (B[:, 1, 1] * B[:, 2, 2] - B[:, 1, 2] * B[:, 2, 1])
            - B[:, 0, 1] * (B[:, 1, 0] * B[:, 2, 2] - B[:, 1, 2] * B[:, 2, 0])
            + B[:, 0, 2] * (B[:, 1, 0] * B[:, 2, 1] - B[:, 1, 1] * B[:, 2, 0])
        )
        phi = np.arccos(np.clip(detB / 2.0, -1.0, 1.0)) / 3.0
        hi = q[safe] + 2.0 * p[safe] * np.cos(phi)
        lo = q[safe] + 2.0 * p[safe] * np.cos(phi + 2.0 * np.pi / 3.0)
        w[safe, 0] = lo
        w[safe, 2] = hi
        w[safe, 1] = 3.0 * q[safe] - lo - hi

    # Eigenvectors for the extreme eigenvalues from cross products of rows of
    # (A - w I); the middle one completes the right-handed frame.
    V = np.empty((n, 3, 3))
    for col, widx in ((0, 0), (2, 2)):
        rows = Af - w[:, widx, None, None] * np.eye(3)
        c01 = np.cross(rows[:, 0], rows[:, 1])
        c02 = np.cross(rows[:, 0], rows[:, 2])
        c12 = np.cross(rows[:, 1], rows[:, 2])
        cand = np.stack([c01, c02, c12], axis=1)
        norms = np.linalg.norm(cand, axis=2)
        best = np.argmax(norms, axis=1)
        vec = cand[np.arange(n), best]
        nv = norms[np.arange(n), best]
        nv = np.where(nv > 0.0, nv, 1.0)
        V[:, :, col] = vec / nv[:, None]
    v1 = np.cross(V[:, :, 2], V[:, :, 0])
    nv1 = np.linalg.norm(v1, axis=1)
    nv1 = np.where(nv1 > 0.0, nv1, 1.0)
    V[:, :, 1] = v1 / nv1[:, None]

    # Fall back to Jacobi where the closed form is unreliable: clustered
    # eigenvalues or a residual above the contract tolerance.
    scale = np.maximum(1.0, np.abs(w).max(axis=1))
    gaps = np.minimum(w[:, 1] - w[:, 0], w[:, 2] - w[:, 1])
    resid = np.einsum("nij,njk->nik", Af, V) - w[:, None, :] * V
    bad = (gaps < _GAP_TOL * scale) | (
        np.linalg.norm(resid, axis=(1, 2)) > _RESID_TOL * scale
    )
    for i in np.nonzero(bad)[0]:
        w[i], V[i] = _jacobi3(Af[i])

    V = _canonical_sign(V)
    # Rayleigh-quotient refinement: the closed form loses tiny smallest
    # eigenvalues to cancellation (floor ~eps * |A|), but the eigenvector is
    # accurate, so v^T A v recovers them to full precision.
    v0 = V[:, :, 0]
    w[:, 0] = np.einsum("ni,nij,nj->n", v0, Af, v0)
    return w.reshape(batch + (3,)), V.reshape(batch + (3, 3))


def min_eigpair(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Smallest eigenvalue and its unit eigenvector, batched."""
    w, V = eigh3(A)
    return w[..., 0], V[..., :, 0]


def min_eigpair_fast(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Smallest eigenpair only, optimized for the optimizer's inner loop.

    Same contract as :func:`min_eigpair` (including the Jacobi fallback and
    sign canonicalization) but skips the other two eigenvectors.
    """
    A = np.asarray(A, dtype=float)
    batch = A.shape[:-2]
    Af = A.reshape((-1, 3, 3))
    n = Af.shape[0]

    a00, a11, a22 = Af[:, 0, 0], Af[:, 1, 1], Af[:, 2, 2]
    a01, a02, a12 = Af[:, 0, 1], Af[:, 0, 2], Af[:, 1, 2]
    q = (a00 + a11 + a22) / 3.0
    p1 = a01 * a01 + a02 * a02 + a12 * a12
    d0, d1, d2 = a00 - q, a11 - q, a22 - q
    p2 = d0 * d0 + d1 * d1 + d2 * d2 + 2.0 * p1
    p = np.sqrt(np.maximum(p2, 0.0) / 6.0)
    ps = np.where(p > 0.0, p, 1.0)
    detB = (
        d0 * (d1 * d2 - a12 * a12)
        - a01 * (a01 * d2 - a12 * a02)
        + a02 * (a01 * a12 - d1 * a02)
    ) / (ps * ps * ps)
    phi = np.arccos(np.clip(detB / 2.0, -1.0, 1.0)) / 3.0
    lo = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    mid = q + 2.0 * p * np.cos(phi - 2.0 * np.pi / 3.0)
    hi = q + 2.0 * p * np.cos(phi)

    rows = Af - lo[:, None, None] * np.eye(3)
    cand = cross3(rows[:, [0, 0, 1]], rows[:, [1, 2, 2]])  # (n, 3, 3)
    norms2 = np.einsum("nki,nki->nk", cand, cand)
    best = np.argmax(norms2, axis=1)
    ar = np.arange(n)
    nb = np.sqrt(norms2[ar, best])
    v = cand[ar, best] / np.where(nb > 0.0, nb, 1.0)[:, None]

    scale = np.maximum(1.0, np.abs(hi))
    resid = np.einsum("nij,nj->ni", Af, v) - lo[:, None] * v
    bad = (mid - lo < _GAP_TOL * scale) | (
        np.einsum("ni,ni->n", resid, resid) > (_RESID_TOL * scale) ** 2
    )
    for i in np.nonzero(bad)[0]:
        wi, Vi = _jacobi3(Af[i])
        lo[i] = wi[0]
        v[i] = Vi[:, 0]

    idx = np.argmax(np.abs(v), axis=1)
    sign = np.where(v[ar, idx] < 0.0, -1.0, 1.0)
    v = v * sign[:, None]
    # Rayleigh-quotient refinement (see eigh3).
    lo = np.einsum("ni,nij,nj->n", v, Af, v)
    return lo.reshape(batch), v.reshape(batch + (3,))
