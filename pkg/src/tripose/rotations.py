"""Rotation parameterizations and angular error metrics.

The optimization chart used throughout the package is the Cayley (Gibbs)
vector: ``R = (I - [c]x)^-1 (I + [c]x)``, equivalently the quaternion vector
part divided by its scalar part.  The chart is singular only at 180 degrees,
which the supported scene protocols never reach.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "skew",
    "cayley_to_rotation",
    "cayley_jacobian",
    "rotation_to_cayley",
    "quaternion_from_rotation",
    "rotation_angle_deg",
    "rotation_from_euler_xyz",
    "random_rotation_about_random_axis",
    "rotation_error",
    "translation_direction_error",
]


def skew(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric cross-product matrix, batched over leading axes."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    out[..., 0, 1] = -z
    out[..., 0, 2] = y
    out[..., 1, 0] = z
    out[..., 1, 2] = -x
    out[..., 2, 0] = -y
    out[..., 2, 1] = x
    return out


def cayley_to_rotation(c: np.ndarray) -> np.ndarray:
    """Map Cayley vectors ``(..., 3)`` to rotation matrices ``(..., 3, 3)``.

    Closed form of ``(I - [c]x)^-1 (I + [c]x)``:
    ``R = ((1 - c.c) I + 2 c c^T + 2 [c]x) / (1 + c.c)``.
    """
    c = np.asarray(c, dtype=float)
    cc = np.einsum("...i,...j->...ij", c, c)
    s = 1.0 + np.einsum("...i,...i->...", c, c)
    eye = np.broadcast_to(np.eye(3), cc.shape)
    num = (1.0 - np.einsum("...i,...i->...", c, c))[..., None, None] * eye
    num = num + 2.0 * cc + 2.0 * skew(c)
    return num / s[..., None, None]


_SKEW_BASIS = np.stack([
    np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]]),
    np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]),
    np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]),
])


def cayley_jacobian(c: np.ndarray, R: np.ndarray | None = None) -> np.ndarray:
    """Derivatives ``dR/dc_k`` of the Cayley map, shape ``(..., 3, 3, 3)``.

    Index layout: ``out[..., k, i, j] = d R[i, j] / d c[k]``.  ``R`` may be
    supplied when already computed for the same ``c``.
    """
    c = np.asarray(c, dtype=float)
    s = 1.0 + np.einsum("...i,...i->...", c, c)
    if R is None:
        R = cayley_to_rotation(c)
    eye = np.eye(3)
    ck = c[..., :, None, None]
    dn = (
        -2.0 * ck * eye
        + 2.0 * np.einsum("ki,...j->...kij", eye, c)
        + 2.0 * np.einsum("...i,kj->...kij", c, eye)
        + 2.0 * _SKEW_BASIS
    )
    return (dn - 2.0 * ck * R[..., None, :, :]) / s[..., None, None, None]


def quaternion_from_rotation(R: np.ndarray) -> np.ndarray:
    """Unit quaternion ``(w, x, y, z)`` from rotation matrices, batched.

    Uses the largest-pivot branch per matrix, so it is stable for any
    rotation angle (including near 180 degrees).
    """
    R = np.asarray(R, dtype=float)
    batch = R.shape[:-2]
    Rf = R.reshape((-1, 3, 3))
    n = Rf.shape[0]
    q = np.empty((n, 4))
    t = np.empty((n, 4))
    t[:, 0] = 1.0 + Rf[:, 0, 0] + Rf[:, 1, 1] + Rf[:, 2, 2]
    t[:, 1] = 1.0 + Rf[:, 0, 0] - Rf[:, 1, 1] - Rf[:, 2, 2]
    t[:, 2] = 1.0 - Rf[:, 0, 0] + Rf[:, 1, 1] - Rf[:, 2, 2]
    t[:, 3] = 1.0 - Rf[:, 0, 0] - Rf[:, 1, 1] + Rf[:, 2, 2]
    branch = np.argmax(t, axis=1)
    for b, rows in [(k, np.nonzero(branch == k)[0]) for k in range(4)]:
        if rows.size == 0:
            continue
        r = Rf[rows]
        s = 2.0 * np.sqrt(t[rows, b])
        if b == 0:
            q[rows, 0] = 0.25 * s
            q[rows, 1] = (r[:, 2, 1] - r[:, 1, 2]) / s
            q[rows, 2] = (r[:, 0, 2] - r[:, 2, 0]) / s
            q[rows, 3] = (r[:, 1, 0] - r[:, 0, 1]) / s
        elif b == 1:
            q[rows, 0] = (r[:, 2, 1] - r[:, 1, 2]) / s
            q[rows, 1] = 0.25 * s
            q[rows, 2] = (r[:, 0, 1] + r[:, 1, 0]) / s
            q[rows, 3] = (r[:, 0, 2] + r[:, 2, 0]) / s
        elif b == 2:
            q[rows, 0] = (r[:, 0, 2] - r[:, 2, 0]) / s
            q[rows, 1] = (r[:, 0, 1] + r[:, 1, 0]) / s
            q[rows, 2] = 0.25 * s
            q[rows, 3] = (r[:, 1, 2] + r[:, 2, 1]) / s
        else:
            q[rows, 0] = (r[:, 1, 0] - r[:, 0, 1]) / s
            q[rows, 1] = (r[:, 0, 2] + r[:, 2, 0]) / s
            q[rows, 2] = (r[:, 1, 2] + r[:, 2, 1]) / s
            q[rows, 3] = 0.25 * s
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return q.reshape(batch + (4,))


def rotation_to_cayley(R: np.ndarray) -> np.ndarray:
    """Inverse of :func:`cayley_to_rotation` (rotation angle must be < 180 deg)."""
    q = quaternion_from_rotation(R)
    w = q[..., 0]
    if np.any(np.abs(w) < 1e-12):
        raise ValueError("Cayley chart is singular at 180 degrees")
    return q[..., 1:] / w[..., None]


def rotation_angle_deg(R: np.ndarray) -> np.ndarray:
    """Rotation angle in degrees via ``2 atan2(|q_vec|, |q_w|)`` (batched)."""
    q = quaternion_from_rotation(R)
    ang = 2.0 * np.arctan2(np.linalg.norm(q[..., 1:], axis=-1), np.abs(q[..., 0]))
    return np.degrees(ang)


def rotation_from_euler_xyz(angles: np.ndarray) -> np.ndarray:
    """Rotation matrix ``Rz @ Ry @ Rx`` from intrinsic x-y-z Euler angles (rad)."""
    ax, ay, az = np.moveaxis(np.asarray(angles, dtype=float), -1, 0)
    cx, sx = np.cos(ax), np.sin(ax)
    cy, sy = np.cos(ay), np.sin(ay)
    cz, sz = np.cos(az), np.sin(az)
    R = np.empty(np.shape(ax) + (3, 3))
    R[..., 0, 0] = cz * cy
    R[..., 0, 1] = cz * sy * sx - sz * cx
    R[..., 0, 2] = cz * sy * cx + sz * sx
    R[..., 1, 0] = sz * cy
    R[..., 1, 1] = sz * sy * sx + cz * cx
    R[..., 1, 2] = sz * sy * cx - cz * sx
    R[..., 2, 0] = -sy
    R[..., 2, 1] = cy * sx
    R[..., 2, 2] = cy * cx
    return R


def random_rotation_about_random_axis(rng: np.random.Generator, angle_rad: float) -> np.ndarray:
    """Rotation by exactly ``angle_rad`` about a uniformly random axis."""
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    c = np.tan(angle_rad / 2.0) * axis
    return cayley_to_rotation(c)


def _angle_between_deg(a: np.ndarray, b: np.ndarray) -> float:
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na < 1e-15 or nb < 1e-15:
        raise ValueError("direction angle is undefined for a zero vector")
    a = a / na
    b = b / nb
    return float(np.degrees(np.arctan2(np.linalg.norm(np.cross(a, b)), np.dot(a, b))))


def rotation_error(
    Rgt_a: np.ndarray, Rest_a: np.ndarray, Rgt_b: np.ndarray, Rest_b: np.ndarray
) -> float:
    """Sum of the two relative-rotation angle errors, in degrees."""
    ea = rotation_angle_deg(np.asarray(Rgt_a).T @ np.asarray(Rest_a))
    eb = rotation_angle_deg(np.asarray(Rgt_b).T @ np.asarray(Rest_b))
    return float(ea + eb)


def translation_direction_error(
    tgt_a: np.ndarray, test_a: np.ndarray, tgt_b: np.ndarray, test_b: np.ndarray
) -> float:
    """Sum of the two translation-direction angle errors, in degrees.

    Raises ``ValueError`` on zero-length inputs; callers must special-case
    pure-rotation geometry where directions are undefined.
    """
    return _angle_between_deg(tgt_a, test_a) + _angle_between_deg(tgt_b, test_b)
