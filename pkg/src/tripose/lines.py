"""2D line segments in polar form.

A line is stored as ``(theta, rho)`` with the incidence vector
``l = (sin theta, -cos theta, rho)`` and ``l . (u, v, 1) = 0`` for points on
the line.  The representation is canonicalized to ``rho >= 0`` with
``theta in [0, 2pi)``, which removes the (l, -l) ambiguity before any
covariance propagation.  ``d`` is the signed offset of the segment midpoint
from the perpendicular foot point, measured along the line direction
``(cos theta, sin theta)``; its magnitude is the foot-to-midpoint distance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["LineObservation", "line_from_endpoints", "polar_from_endpoints"]

_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class LineObservation:
    """One image observation of a line segment."""

    theta: float
    rho: float
    endpoints: np.ndarray  # (2, 2) pixel endpoints
    c: float  # segment length (pixels)
    d: float  # signed foot-to-midpoint offset (pixels)

    @property
    def vec(self) -> np.ndarray:
        """Homogeneous incidence vector ``(sin theta, -cos theta, rho)``."""
        return np.array([np.sin(self.theta), -np.cos(self.theta), self.rho])


def polar_from_endpoints(p1: np.ndarray, p2: np.ndarray):
    """Canonical ``(theta, rho, c, d)`` for segments, batched over leading axes.

    Raises ``ValueError`` if any segment is shorter than 1e-9 pixels.
    """
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    diff = p2 - p1
    c = np.linalg.norm(diff, axis=-1)
    if np.any(c < 1e-9):
        raise ValueError("degenerate segment: endpoints closer than 1e-9 px")
    tang = diff / c[..., None]
    # Line direction is (cos t, sin t) = tangent; the unit normal is then
    # (sin t, -cos t), and rho follows from incidence at p1.
    cos_t = tang[..., 0]
    sin_t = tang[..., 1]
    rho = -(p1[..., 0] * sin_t - p1[..., 1] * cos_t)
    flip = rho < 0.0
    sin_t = np.where(flip, -sin_t, sin_t)
    cos_t = np.where(flip, -cos_t, cos_t)
    rho = np.abs(rho)
    theta = np.mod(np.arctan2(sin_t, cos_t), _TWO_PI)
    # mod of a denormal-negative angle can round up to exactly 2*pi.
    theta = np.where(theta >= _TWO_PI, 0.0, theta)
    mid = 0.5 * (p1 + p2)
    d = mid[..., 0] * cos_t + mid[..., 1] * sin_t
    return theta, rho, c, d


def line_from_endpoints(p1: np.ndarray, p2: np.ndarray) -> LineObservation:
    """Fit the canonical polar line through two pixel endpoints."""
    theta, rho, c, d = polar_from_endpoints(p1, p2)
    return LineObservation(
        theta=float(theta),
        rho=float(rho),
        endpoints=np.stack([np.asarray(p1, float), np.asarray(p2, float)]),
        c=float(c),
        d=float(d),
    )
