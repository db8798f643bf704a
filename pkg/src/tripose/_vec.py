"""Small vector helpers for the optimizer hot paths.

``np.cross`` spends most of its time normalizing axes for small arrays;
explicit component arithmetic is several times faster and broadcasts the
same way.
"""

from __future__ import annotations

import numpy as np


def cross3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross product over the last axis, broadcasting like ``a * b``."""
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    out[..., 0] = a1 * b2 - a2 * b1
    out[..., 1] = a2 * b0 - a0 * b2
    out[..., 2] = a0 * b1 - a1 * b0
    return out


def norm_last(a: np.ndarray) -> np.ndarray:
    """Euclidean norm over the last axis."""
    return np.sqrt(np.einsum("...i,...i->...", a, a))


def rotate(R: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Apply rotations ``(..., 3, 3)`` to stacks of vectors ``(..., m, 3)``."""
    return np.matmul(v, np.swapaxes(R, -1, -2))
