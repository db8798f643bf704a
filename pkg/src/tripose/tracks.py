"""Feature track containers shared by the solvers.

Tracks precompute everything the estimators need that does not depend on
the unknown motion (bearings, calibrated rays, back-projected plane normals,
and the per-observation uncertainty terms), so the optimization loops never
touch the camera model again.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import (
    CameraIntrinsics,
    bearing_jacobians,
    bearings_from_pixels,
    backprojected_normals,
    rays_from_pixels,
)
from .lines import polar_from_endpoints
from .weights import line_parameter_covariance, normal_covariance_unscented

__all__ = [
    "PointTrack",
    "LineTrack",
    "point_track_from_pixels",
    "line_track_from_endpoints",
    "stack_point_tracks",
    "stack_line_tracks",
]


@dataclass(frozen=True)
class PointTrack:
    """One point feature observed in two or three of the frames 0, 1, 2.

    Unobserved frames hold NaN pixels.  ``pixel_cov`` is the 2x2 pixel noise
    covariance per observation.
    """

    pixels: np.ndarray  # (3, 2)
    bearings: np.ndarray  # (3, 3) unit, NaN where unobserved
    rays: np.ndarray  # (3, 3) z=1 calibrated coordinates
    bearing_jac: np.ndarray  # (3, 3, 2) d bearing / d pixel
    pixel_cov: np.ndarray  # (3, 2, 2)

    @property
    def observed(self) -> np.ndarray:
        return ~np.isnan(self.pixels[:, 0])

    def __post_init__(self):
        obs = self.observed
        if obs.sum() < 2:
            raise ValueError("a point track needs at least two observed frames")


@dataclass(frozen=True)
class LineTrack:
    """One line feature observed in all three frames.

    ``polar`` rows are ``(theta, rho)``, ``seg`` rows are ``(c, d)`` and
    ``normal_cov`` holds the propagated covariance of each unit plane normal.
    """

    endpoints: np.ndarray  # (3, 2, 2)
    polar: np.ndarray  # (3, 2)
    seg: np.ndarray  # (3, 2)
    normals: np.ndarray  # (3, 3) unit back-projected plane normals, own frames
    normal_cov: np.ndarray  # (3, 3, 3)
    sigma: float = 0.0  # endpoint noise std used for the covariance model

    line_vecs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.endpoints.shape != (3, 2, 2):
            raise ValueError("a line track needs endpoints in all three frames")
        theta = self.polar[:, 0]
        vecs = np.stack([np.sin(theta), -np.cos(theta), self.polar[:, 1]], axis=-1)
        object.__setattr__(self, "line_vecs", vecs)


def point_track_from_pixels(
    pixels: np.ndarray, intr: CameraIntrinsics, sigma: float = 1.0
) -> PointTrack:
    """Build a point track from per-frame pixels (NaN rows = unobserved)."""
    pixels = np.asarray(pixels, dtype=float).reshape(3, 2)
    obs = ~np.isnan(pixels[:, 0])
    bearings = np.full((3, 3), np.nan)
    rays = np.full((3, 3), np.nan)
    jac = np.zeros((3, 3, 2))
    if obs.any():
        bearings[obs] = bearings_from_pixels(pixels[obs], intr)
        rays[obs] = rays_from_pixels(pixels[obs], intr)
        jac[obs] = bearing_jacobians(pixels[obs], intr)
    cov = np.zeros((3, 2, 2))
    cov[obs] = sigma**2 * np.eye(2)
    return PointTrack(pixels=pixels, bearings=bearings, rays=rays, bearing_jac=jac, pixel_cov=cov)


def stack_point_tracks(tracks) -> dict:
    """Stack point tracks into dense arrays for the solvers.

    Returns a dict with ``bearings (m,3,3)``, ``rays``, ``jac (m,3,3,2)``,
    ``pixel_cov (m,3,2,2)``, ``observed (m,3)`` and the index arrays
    ``idx01`` / ``idx12`` of tracks usable in each frame pair.
    """
    m = len(tracks)
    out = {
        "bearings": np.full((m, 3, 3), np.nan),
        "rays": np.full((m, 3, 3), np.nan),
        "jac": np.zeros((m, 3, 3, 2)),
        "pixel_cov": np.zeros((m, 3, 2, 2)),
        "observed": np.zeros((m, 3), dtype=bool),
    }
    for i, t in enumerate(tracks):
        out["bearings"][i] = t.bearings
        out["rays"][i] = t.rays
        out["jac"][i] = t.bearing_jac
        out["pixel_cov"][i] = t.pixel_cov
        out["observed"][i] = t.observed
    obs = out["observed"]
    out["idx01"] = np.nonzero(obs[:, 0] & obs[:, 1])[0]
    out["idx12"] = np.nonzero(obs[:, 1] & obs[:, 2])[0]
    return out


def stack_line_tracks(tracks) -> dict:
    """Stack line tracks into ``normals (n,3,3)`` and ``normal_cov (n,3,3,3)``."""
    n = len(tracks)
    normals = np.zeros((n, 3, 3))
    ncov = np.zeros((n, 3, 3, 3))
    for i, t in enumerate(tracks):
        normals[i] = t.normals
        ncov[i] = t.normal_cov
    return {"normals": normals, "normal_cov": ncov}


def line_track_from_endpoints(
    endpoints: np.ndarray, intr: CameraIntrinsics, sigma: float = 1.0
) -> LineTrack:
    """Build a line track from endpoints ``(3, 2, 2)`` observed in all frames."""
    endpoints = np.asarray(endpoints, dtype=float).reshape(3, 2, 2)
    theta, rho, c, d = polar_from_endpoints(endpoints[:, 0], endpoints[:, 1])
    vecs = np.stack([np.sin(theta), -np.cos(theta), rho], axis=-1)
    normals = backprojected_normals(vecs, intr)
    cov2 = line_parameter_covariance(sigma, c, d)
    ncov = normal_covariance_unscented(theta, rho, cov2, intr)
    return LineTrack(
        endpoints=endpoints,
        polar=np.stack([theta, rho], axis=-1),
        seg=np.stack([c, d], axis=-1),
        normals=normals,
        normal_cov=ncov,
        sigma=sigma,
    )
