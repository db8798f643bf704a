"""Pinhole camera model and the elementary ray/plane constructions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "CameraIntrinsics",
    "PlaneNormal",
    "bearing_from_pixel",
    "bearings_from_pixels",
    "bearing_jacobians",
    "rays_from_pixels",
    "epipolar_normal",
    "backprojected_normal",
    "backprojected_normals",
]


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics (pixels).  Both focal lengths must be positive."""

    fx: float
    fy: float
    cx: float = 0.0
    cy: float = 0.0

    def __post_init__(self):
        if not (self.fx > 0.0 and self.fy > 0.0):
            raise ValueError("focal lengths must be positive")

    @property
    def K(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def project(self, points_cam: np.ndarray) -> np.ndarray:
        """Project camera-frame 3D points ``(..., 3)`` to pixels ``(..., 2)``."""
        p = np.asarray(points_cam, dtype=float)
        z = p[..., 2]
        return np.stack(
            [self.fx * p[..., 0] / z + self.cx, self.fy * p[..., 1] / z + self.cy],
            axis=-1,
        )


class PlaneNormal(NamedTuple):
    """Unit plane normal together with the frame index it is expressed in."""

    n: np.ndarray
    frame: int


def rays_from_pixels(pixels: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
    """Calibrated homogeneous coordinates ``K^-1 [u, v, 1]`` with z = 1."""
    p = np.asarray(pixels, dtype=float)
    out = np.empty(p.shape[:-1] + (3,))
    out[..., 0] = (p[..., 0] - intr.cx) / intr.fx
    out[..., 1] = (p[..., 1] - intr.cy) / intr.fy
    out[..., 2] = 1.0
    return out


def bearings_from_pixels(pixels: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
    """Unit bearing vectors through the given pixels, batched."""
    rays = rays_from_pixels(pixels, intr)
    return rays / np.linalg.norm(rays, axis=-1, keepdims=True)


def bearing_from_pixel(pixel: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
    """Unit bearing vector for a single pixel."""
    return bearings_from_pixels(np.asarray(pixel, dtype=float), intr)


def bearing_jacobians(pixels: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
    """Derivative of the unit bearing w.r.t. the pixel, shape ``(..., 3, 2)``."""
    rays = rays_from_pixels(pixels, intr)
    norm = np.linalg.norm(rays, axis=-1, keepdims=True)
    b = rays / norm
    proj = np.broadcast_to(np.eye(3), b.shape + (3,)).copy()
    proj = proj - np.einsum("...i,...j->...ij", b, b)
    dray = np.zeros(b.shape[:-1] + (3, 2))
    dray[..., 0, 0] = 1.0 / intr.fx
    dray[..., 1, 1] = 1.0 / intr.fy
    return np.einsum("...ij,...jk->...ik", proj, dray) / norm[..., None]


def epipolar_normal(b0: np.ndarray, b1: np.ndarray, R01: np.ndarray) -> np.ndarray:
    """Normal of the epipolar plane spanned by two bearings: ``b0 x (R01 b1)``.

    The result is intentionally unnormalized; its magnitude carries the
    triangulation angle.  Callers must treat ``|n| < 1e-12`` (parallel rays,
    e.g. the forward-motion epipole) as an uninformative term.
    """
    rotated = np.einsum("...ij,...j->...i", np.asarray(R01, dtype=float), np.asarray(b1, dtype=float))
    return np.cross(np.asarray(b0, dtype=float), rotated)


def backprojected_normals(line_vecs: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
    """Unit normals ``K^T l / |K^T l|`` of back-projected line planes, batched."""
    l = np.asarray(line_vecs, dtype=float)
    y = np.einsum("ji,...j->...i", intr.K, l)
    return y / np.linalg.norm(y, axis=-1, keepdims=True)


def backprojected_normal(line, intr: CameraIntrinsics, frame: int = 0) -> PlaneNormal:
    """Unit normal of the plane through the optical center and an image line.

    ``line`` may be a 3-vector ``(sin t, -cos t, rho)`` or any object with a
    ``vec`` attribute providing one.
    """
    vec = getattr(line, "vec", line)
    return PlaneNormal(backprojected_normals(vec, intr), frame)
