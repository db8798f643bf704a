"""Coplanarity costs for decoupled two-rotation estimation.

The unknowns are the two rotations taking features from the outer frames
into the middle frame (``R10``, ``R12``), parameterized by one Cayley
vector each (6 parameters total).

Point terms: for each frame pair, the epipolar-plane normals
``n_j = b_mid x (R b_outer)`` of all correspondences span a plane orthogonal
to the translation direction, so the pairwise cost is the smallest
eigenvalue of ``M = sum_j w_j n_j n_j^T``.  The normals enter unnormalized,
exactly as the cross product produces them.

Line terms: the three back-projected plane normals of a line, expressed in
the middle frame, are orthogonal to the line direction.  Two residual forms
are supported: the smallest eigenvalue of the 3-normal scatter matrix
("min-eig"), and the scalar triple product of the three unit normals
("triple", the parallelepiped volume), computed directly rather than via an
eigen decomposition.

Residuals are arranged so the sum of squares equals the cost and, at a fixed
evaluation point, the stacked Jacobian yields the exact cost gradient (the
eigenvector-derivative terms cancel for eigenvalue objectives).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._vec import cross3
from .eig3 import eigh3, min_eigpair, min_eigpair_fast
from .rotations import cayley_jacobian, cayley_to_rotation

__all__ = [
    "NORMAL_EPS",
    "CoplanarityMatrix",
    "point_coplanarity_matrix",
    "line_coplanarity_matrix",
    "min_eig_residual",
    "triple_product_residual",
    "RotationProblem",
    "combined_cost",
]

NORMAL_EPS = 1e-12  # epipolar normals shorter than this are uninformative


@dataclass(frozen=True)
class CoplanarityMatrix:
    """Scatter matrix of plane normals with its eigen decomposition."""

    M: np.ndarray  # (3, 3) symmetric PSD
    eigenvalues: np.ndarray  # ascending (3,)
    direction: np.ndarray  # unit eigenvector of the smallest eigenvalue

    @classmethod
    def from_matrix(cls, M: np.ndarray) -> "CoplanarityMatrix":
        w, V = eigh3(M)
        return cls(M=M, eigenvalues=w, direction=V[..., :, 0])

    @property
    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues[0])


def _refined_from_vectors(M: np.ndarray, vectors: np.ndarray, weights: np.ndarray) -> CoplanarityMatrix:
    """Eigen decomposition with lambda_min recomputed from the factored sum.

    ``v^T M v`` evaluated on the assembled Gram matrix is floored by its
    entry rounding (~eps * |M|); the equivalent sum of squared projections
    has no cancellation and resolves exactly-coplanar inputs to ~1e-30.
    """
    w, V = eigh3(M)
    v = V[..., :, 0]
    lam = float(np.einsum("m,m->", weights, np.einsum("mi,i->m", vectors, v) ** 2))
    w = w.copy()
    w[0] = lam
    return CoplanarityMatrix(M=M, eigenvalues=w, direction=v)


def point_coplanarity_matrix(
    b_ref: np.ndarray, b_other: np.ndarray, R: np.ndarray, weights=None
) -> CoplanarityMatrix:
    """Scatter matrix of epipolar-plane normals for one frame pair.

    ``b_ref`` are bearings in the frame the normals live in, ``b_other`` in
    the frame ``R`` maps from.  Terms with near-zero normals (parallel rays)
    are skipped.  Requires at least two tracks.
    """
    b_ref = np.atleast_2d(np.asarray(b_ref, dtype=float))
    b_other = np.atleast_2d(np.asarray(b_other, dtype=float))
    if b_ref.shape[0] < 1:
        raise ValueError("no tracks given")
    n = np.cross(b_ref, np.einsum("ij,mj->mi", np.asarray(R, float), b_other))
    keep = np.linalg.norm(n, axis=-1) >= NORMAL_EPS
    w = np.ones(n.shape[0]) if weights is None else np.asarray(weights, float)
    M = np.einsum("m,mi,mj->ij", w * keep, n, n)
    return _refined_from_vectors(M, n, w * keep)


def line_coplanarity_matrix(
    normals: np.ndarray, R10: np.ndarray, R12: np.ndarray
) -> CoplanarityMatrix:
    """Scatter matrix of one line's three plane normals in the middle frame."""
    normals = np.asarray(normals, dtype=float)
    rot = np.stack(
        [
            np.asarray(R10, float) @ normals[0],
            normals[1],
            np.asarray(R12, float) @ normals[2],
        ]
    )
    M = rot.T @ rot
    return _refined_from_vectors(M, rot, np.ones(3))


def min_eig_residual(M: CoplanarityMatrix | np.ndarray) -> float:
    """Smallest-eigenvalue residual of a coplanarity matrix."""
    if isinstance(M, CoplanarityMatrix):
        return M.min_eigenvalue
    return float(min_eigpair(np.asarray(M, float))[0])


def triple_product_residual(n0: np.ndarray, n1: np.ndarray, n2: np.ndarray) -> float:
    """Volume residual |n0 . (n1 x n2)| of three unit normals in one frame."""
    return float(np.abs(np.dot(n0, np.cross(n1, n2))))


def _prep(a, width):
    """Broadcast problem data to (B, m, ...) with B batch problems."""
    a = np.asarray(a, dtype=float)
    if a.ndim == width:
        a = a[None]
    return a


class RotationProblem:
    """Weighted combined point+line rotation problem, batched over problems.

    All data arrays may carry a leading batch axis (one problem per batch
    element, e.g. one robust-estimation hypothesis).  The state is
    ``x = [cayley(R10), cayley(R12)]`` of shape ``(B, 6)``.
    """

    def __init__(
        self,
        b1_01: np.ndarray | None = None,
        b0_01: np.ndarray | None = None,
        b1_12: np.ndarray | None = None,
        b2_12: np.ndarray | None = None,
        line_normals: np.ndarray | None = None,
        w01=None,
        w12=None,
        w_line=None,
        line_form: str = "triple",
    ):
        if line_form not in ("triple", "min-eig"):
            raise ValueError(f"unknown line residual form: {line_form!r}")
        self.line_form = line_form

        def norm_pair(bref, both):
            if bref is None or np.asarray(bref).size == 0:
                return None, None
            return _prep(bref, 2), _prep(both, 2)

        self.b1_01, self.b0_01 = norm_pair(b1_01, b0_01)
        self.b1_12, self.b2_12 = norm_pair(b1_12, b2_12)
        self.lines = None
        if line_normals is not None and np.asarray(line_normals).size:
            self.lines = _prep(line_normals, 3)

        batch = 1
        for arr in (self.b1_01, self.b1_12, self.lines):
            if arr is not None:
                batch = max(batch, arr.shape[0])
        self.batch = batch

        def norm_w(w, data):
            if data is None:
                return None
            m = data.shape[1]
            if w is None:
                return np.ones((batch, m))
            w = np.asarray(w, dtype=float)
            if w.ndim == 1:
                w = w[None]
            return np.broadcast_to(w, (batch, m)).copy()

        self.w01 = norm_w(w01, self.b1_01)
        self.w12 = norm_w(w12, self.b1_12)
        self.w_line = norm_w(w_line, self.lines)

        self.m01 = 0 if self.b1_01 is None else self.b1_01.shape[1]
        self.m12 = 0 if self.b1_12 is None else self.b1_12.shape[1]
        self.n_lines = 0 if self.lines is None else self.lines.shape[1]
        rows_per_line = 3 if line_form == "min-eig" else 1
        self.n_residuals = self.m01 + self.m12 + rows_per_line * self.n_lines
        if self.n_residuals == 0:
            raise ValueError("empty problem")

        # Fitted directions from the latest evaluation (per pair), used as a
        # translation-direction fallback and for inlier scoring.
        self.last_dir01: np.ndarray | None = None
        self.last_dir12: np.ndarray | None = None

    # -- evaluation --------------------------------------------------------

    @staticmethod
    def _tangent_basis(v):
        """Orthonormal basis of the plane orthogonal to unit vectors ``v``."""
        e = np.zeros_like(v)
        idx = np.argmin(np.abs(v), axis=-1)
        np.put_along_axis(e, idx[..., None], 1.0, axis=-1)
        t1 = cross3(v, e)
        t1 = t1 / np.sqrt(np.einsum("...i,...i->...", t1, t1))[..., None]
        t2 = cross3(v, t1)
        return np.stack([t1, t2], axis=-1)  # (..., 3, 2)

    @staticmethod
    def _project_out(A, J):
        """Kaufman variable-projection: remove span(A) from Jacobian rows.

        ``A`` holds the residual sensitivities to the eliminated fitted
        direction; projecting them out restores superlinear convergence of
        the damped Gauss-Newton iteration while leaving ``J^T r`` (the exact
        cost gradient) unchanged, because ``A^T r = 0`` at the fitted
        direction.
        """
        At = np.swapaxes(A, -1, -2)
        G = np.matmul(At, A)
        det = G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] * G[..., 1, 0]
        ok = det > 1e-30
        inv = np.empty_like(G)
        d = np.where(ok, det, 1.0)
        inv[..., 0, 0] = G[..., 1, 1] / d
        inv[..., 1, 1] = G[..., 0, 0] / d
        inv[..., 0, 1] = -G[..., 0, 1] / d
        inv[..., 1, 0] = -G[..., 1, 0] / d
        corr = np.matmul(A, np.matmul(inv, np.matmul(At, J)))
        return J - np.where(ok[..., None, None], corr, 0.0)

    def _pair_terms(self, bref, both, w, R, dR, jac):
        B, m = both.shape[0], both.shape[1]
        u = cross3(bref, np.matmul(both, np.swapaxes(R, -1, -2)))
        keep = (np.einsum("bmi,bmi->bm", u, u) >= NORMAL_EPS**2).astype(float)
        weff = w * keep
        M = np.matmul(np.swapaxes(weff[..., None] * u, -1, -2), u)
        _, v = min_eigpair_fast(M)
        sw = np.sqrt(weff)
        r = sw * np.einsum("bi,bmi->bm", v, u)
        J = None
        if jac:
            # dRb[b, m, k, :] = dR_k b_m via one stacked matmul.
            tmp = np.matmul(dR.reshape(B, 9, 3), np.swapaxes(both, -1, -2))
            dRb = np.moveaxis(tmp.reshape(B, 3, 3, m), 3, 1)
            du = cross3(bref[:, :, None, :], dRb)
            J = sw[..., None] * np.einsum("bi,bmki->bmk", v, du)
            T = self._tangent_basis(v)
            A = sw[..., None] * np.matmul(u, T)
            J = self._project_out(A, J)
        return r, J, v

    def evaluate(self, x: np.ndarray, jac: bool = True, subset=None):
        """Residual vector (and optionally Jacobian) at states ``x``.

        Args:
            x: ``(B, 6)`` or ``(6,)`` Cayley state.
            jac: when True also return ``J`` of shape ``(B, R, 6)``.
            subset: optional indices into the problem batch; ``x`` rows then
                correspond to those problems only.

        Returns:
            ``(r, J)`` with ``r`` of shape ``(B, R)``; ``J`` is None when
            ``jac`` is False.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        take = None if (subset is None or self.batch == 1) else np.asarray(subset)
        B = x.shape[0] if take is not None else max(self.batch, x.shape[0])

        def data(arr):
            a = arr if take is None else arr[take]
            if a.shape[0] == 1 and B > 1:
                a = np.broadcast_to(a, (B,) + a.shape[1:])
            return a
        both_cay = np.concatenate([x[:, :3], x[:, 3:]], axis=0)
        Rb = cayley_to_rotation(both_cay)
        R10, R12 = Rb[:B], Rb[B:]
        dR10 = dR12 = None
        if jac:
            dRb = cayley_jacobian(both_cay, Rb)
            dR10, dR12 = dRb[:B], dRb[B:]

        r = np.zeros((B, self.n_residuals))
        J = np.zeros((B, self.n_residuals, 6)) if jac else None
        at = 0

        def keep_dirs(store, v):
            if store is None or take is None:
                return v
            store[take] = v
            return store

        if self.m01 and self.m01 == self.m12:
            # Both pairs present with equal sizes: evaluate them in one
            # stacked call (the common case; halves dispatch overhead).
            rp, Jp, v = self._pair_terms(
                np.concatenate([data(self.b1_01), data(self.b1_12)], axis=0),
                np.concatenate([data(self.b0_01), data(self.b2_12)], axis=0),
                np.concatenate([data(self.w01), data(self.w12)], axis=0),
                Rb,
                dRb if jac else None,
                jac,
            )
            m = self.m01
            r[:, at : at + m] = rp[:B]
            r[:, at + m : at + 2 * m] = rp[B:]
            if jac:
                J[:, at : at + m, :3] = Jp[:B]
                J[:, at + m : at + 2 * m, 3:] = Jp[B:]
            self.last_dir01 = keep_dirs(self.last_dir01, v[:B])
            self.last_dir12 = keep_dirs(self.last_dir12, v[B:])
            at += 2 * m
        else:
            if self.m01:
                rp, Jp, v01 = self._pair_terms(
                    data(self.b1_01), data(self.b0_01), data(self.w01), R10, dR10, jac
                )
                r[:, at : at + self.m01] = rp
                if jac:
                    J[:, at : at + self.m01, :3] = Jp
                self.last_dir01 = keep_dirs(self.last_dir01, v01)
                at += self.m01
            if self.m12:
                rp, Jp, v12 = self._pair_terms(
                    data(self.b1_12), data(self.b2_12), data(self.w12), R12, dR12, jac
                )
                r[:, at : at + self.m12] = rp
                if jac:
                    J[:, at : at + self.m12, 3:] = Jp
                self.last_dir12 = keep_dirs(self.last_dir12, v12)
                at += self.m12

        if self.n_lines:
            lines = data(self.lines)
            n0 = lines[:, :, 0]
            n1 = lines[:, :, 1]
            n2 = lines[:, :, 2]
            n0r = np.matmul(n0, np.swapaxes(R10, -1, -2))
            n2r = np.matmul(n2, np.swapaxes(R12, -1, -2))
            sw = np.sqrt(data(self.w_line))
            nl = n0.shape[1]

            def dRn(dR, nv):
                tmp = np.matmul(dR.reshape(B, 9, 3), np.swapaxes(nv, -1, -2))
                return np.moveaxis(tmp.reshape(B, 3, 3, nl), 3, 1)  # (B, n, k, 3)

            if self.line_form == "triple":
                c12x = cross3(n1, n2r)
                e = np.einsum("bni,bni->bn", n0r, c12x)
                r[:, at:] = sw * e
                if jac:
                    d0 = dRn(dR10, n0)
                    d2 = dRn(dR12, n2)
                    c01x = cross3(n0r, n1)
                    J[:, at:, :3] = sw[..., None] * np.einsum("bni,bnki->bnk", c12x, d0)
                    J[:, at:, 3:] = sw[..., None] * np.einsum("bni,bnki->bnk", c01x, d2)
            else:
                stacked = np.stack([n0r, n1, n2r], axis=2)  # (B, n, 3, 3)
                M = np.matmul(np.swapaxes(stacked, -1, -2), stacked)
                _, v = min_eigpair_fast(M)  # (B, n, 3)
                res = np.einsum("bni,bnki->bnk", v, stacked)  # (B, n, 3)
                r[:, at:] = (sw[..., None] * res).reshape(B, -1)
                if jac:
                    d0 = dRn(dR10, n0)
                    d2 = dRn(dR12, n2)
                    Jl = np.zeros((B, self.n_lines, 3, 6))
                    Jl[:, :, 0, :3] = np.einsum("bni,bnki->bnk", v, d0)
                    Jl[:, :, 2, 3:] = np.einsum("bni,bnki->bnk", v, d2)
                    T = self._tangent_basis(v)
                    A = np.matmul(stacked, T)
                    Jl = self._project_out(A, Jl)
                    J[:, at:, :] = (sw[..., None, None] * Jl).reshape(B, -1, 6)
        return r, J

    def cost(self, x: np.ndarray) -> np.ndarray:
        """Total weighted cost per batch problem."""
        r, _ = self.evaluate(x, jac=False)
        return np.einsum("br,br->b", r, r)


def combined_cost(x: np.ndarray, problem: RotationProblem):
    """Total cost and stacked per-feature residuals at one state."""
    r, _ = problem.evaluate(np.asarray(x, dtype=float), jac=False)
    E = float(np.einsum("br,br->b", r, r)[0])
    return E, r[0]
