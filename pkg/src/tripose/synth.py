"""Synthetic three-view scene generation with ground truth.

Protocol: frame 0 is fixed at the origin; the orientations of frames 1 and
2 are chained from random x-y-z Euler angles bounded by ``max_euler``; the
two consecutive camera-center steps have uniform components in
``[-max_translation, max_translation]``.  Landmarks (3D points and the two endpoints of each 3D
line) are sampled isotropically in the spherical shell ``depth_range``
around the frame-0 origin, rejecting samples that fall behind any camera.
Observations are pixel projections with independent Gaussian noise added to
every point and every line endpoint; line polar parameters are refit from
the noisy endpoints.

Degeneracies: ``planar`` constrains all landmarks to one random plane,
``pure_rotation`` zeroes both translations.

Randomness is split into independent counter-based streams per purpose
(poses, point landmarks, line landmarks, point noise, line noise, outliers)
so that e.g. injecting outliers never perturbs the inlier noise draws.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from .camera import CameraIntrinsics
from .rotations import rotation_from_euler_xyz
from .tracks import LineTrack, PointTrack, line_track_from_endpoints, point_track_from_pixels

__all__ = [
    "ScenarioConfig",
    "ThreeViewScene",
    "SceneGenerationError",
    "generate_scene",
    "inject_outliers",
    "make_planar",
    "make_pure_rotation",
]

_MAX_ATTEMPTS = 10_000

Mode = Literal["general", "planar", "pure_rotation"]


class SceneGenerationError(RuntimeError):
    """Raised when rejection sampling cannot place a landmark."""


@dataclass(frozen=True)
class ScenarioConfig:
    """Parameters of one synthetic scene draw."""

    n_points: int = 15
    n_lines: int = 15
    noise_std: float = 0.0
    outlier_fraction: float = 0.0
    mode: Mode = "general"
    rng_seed: int = 0
    max_euler: float = 0.5
    depth_range: tuple[float, float] = (4.0, 8.0)
    max_translation: float = 2.0
    focal: float = 800.0
    principal_point: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.n_points < 0 or self.n_lines < 0:
            raise ValueError("feature counts must be non-negative")
        if self.noise_std < 0.0:
            raise ValueError("noise_std must be non-negative")
        if not (0.0 <= self.outlier_fraction < 1.0):
            raise ValueError("outlier_fraction must be in [0, 1)")
        if self.mode not in ("general", "planar", "pure_rotation"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(
            fx=self.focal, fy=self.focal, cx=self.principal_point[0], cy=self.principal_point[1]
        )


@dataclass
class ThreeViewScene:
    """A generated scene: ground truth plus the noisy feature tracks."""

    config: ScenarioConfig
    intrinsics: CameraIntrinsics
    gt_r10: np.ndarray  # features frame 0 -> frame 1
    gt_r12: np.ndarray  # features frame 2 -> frame 1
    gt_translations: np.ndarray  # (3, 3) global camera centers, row 0 = origin
    point_tracks: list = field(default_factory=list)
    line_tracks: list = field(default_factory=list)
    point_outliers: np.ndarray = field(default_factory=lambda: np.zeros(0, bool))
    line_outliers: np.ndarray = field(default_factory=lambda: np.zeros(0, bool))
    points_3d: np.ndarray | None = None
    line_endpoints_3d: np.ndarray | None = None
    plane: tuple[np.ndarray, float] | None = None  # (unit normal, offset)

    @property
    def gt_relative_translations(self) -> tuple[np.ndarray, np.ndarray]:
        """Ground-truth ``(t_0->1 in frame 0, t_1->2 in frame 1)``, unnormalized."""
        t01 = self.gt_translations[1] - self.gt_translations[0]
        t12 = self.gt_r10 @ (self.gt_translations[2] - self.gt_translations[1])
        return t01, t12


def _stream(seed: int, *key: int) -> np.random.Generator:
    """Independent counter-based stream for one purpose."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, *key))))


def make_planar(cfg: ScenarioConfig) -> ScenarioConfig:
    return replace(cfg, mode="planar")


def make_pure_rotation(cfg: ScenarioConfig) -> ScenarioConfig:
    return replace(cfg, mode="pure_rotation")


def _world_to_cam(R_kG: np.ndarray, center: np.ndarray, pts: np.ndarray) -> np.ndarray:
    return np.einsum("ij,mj->mi", R_kG, pts - center)


class _Sampler:
    """Rejection sampler for landmarks visible in all three frames."""

    def __init__(self, cfg: ScenarioConfig, frames, rng, plane=None):
        self.cfg = cfg
        self.frames = frames  # list of (R_kG, center)
        self.rng = rng
        self.plane = plane
        if plane is not None:
            n = plane[0]
            # In-plane orthonormal basis.
            a = np.array([1.0, 0.0, 0.0])
            if abs(n[0]) > 0.9:
                a = np.array([0.0, 1.0, 0.0])
            u = np.cross(n, a)
            u /= np.linalg.norm(u)
            self.basis = (u, np.cross(n, u))
            self.anchor = plane[0] * plane[1]

    def _candidates(self, k: int) -> np.ndarray:
        lo, hi = self.cfg.depth_range
        if self.plane is None:
            v = self.rng.normal(size=(k, 3))
            v /= np.linalg.norm(v, axis=1, keepdims=True)
            return v * self.rng.uniform(lo, hi, size=(k, 1))
        u, w = self.basis
        ab = self.rng.uniform(-0.45 * (lo + hi), 0.45 * (lo + hi), size=(k, 2))
        return self.anchor + ab[:, :1] * u + ab[:, 1:] * w

    def _visible(self, pts: np.ndarray) -> np.ndarray:
        ok = np.ones(pts.shape[0], dtype=bool)
        for R_kG, center in self.frames:
            ok &= _world_to_cam(R_kG, center, pts)[:, 2] > 0.0
        if self.plane is not None:
            lo, hi = self.cfg.depth_range
            r = np.linalg.norm(pts, axis=1)
            ok &= (r >= lo) & (r <= hi)
        return ok

    def draw(self, count: int) -> np.ndarray:
        out = np.empty((count, 3))
        have = 0
        attempts = 0
        while have < count:
            k = max(2 * (count - have), 16)
            cand = self._candidates(k)
            cand = cand[self._visible(cand)]
            take = min(cand.shape[0], count - have)
            out[have : have + take] = cand[:take]
            have += take
            attempts += k
            if attempts > _MAX_ATTEMPTS * max(count, 1):
                raise SceneGenerationError(
                    "rejection sampling failed: landmarks keep falling behind a camera"
                )
        return out


def generate_scene(cfg: ScenarioConfig, poses=None) -> ThreeViewScene:
    """Generate a scene; deterministic in ``cfg.rng_seed``.

    Noiseless observations are exactly consistent with the ground truth.
    ``poses`` may fix the ground truth as ``(R10, R12, centers)`` instead of
    sampling it (landmarks and noise are drawn as usual).  Raises
    :class:`SceneGenerationError` if landmark placement fails.
    """
    rng_pose = _stream(cfg.rng_seed, 0)
    if poses is None:
        e1 = rng_pose.uniform(-cfg.max_euler, cfg.max_euler, size=3)
        e2 = rng_pose.uniform(-cfg.max_euler, cfg.max_euler, size=3)
        R10 = rotation_from_euler_xyz(e1)
        R21 = rotation_from_euler_xyz(e2)
        R12 = R21.T

        if cfg.mode == "pure_rotation":
            c1 = np.zeros(3)
            c2 = np.zeros(3)
        else:
            # Uniform per-component steps, matching the common synthetic-pose
            # benchmark generator (direction roughly isotropic, parallax up
            # to max_translation per axis).
            c1 = rng_pose.uniform(-cfg.max_translation, cfg.max_translation, size=3)
            c2 = c1 + rng_pose.uniform(-cfg.max_translation, cfg.max_translation, size=3)
        centers = np.stack([np.zeros(3), c1, c2])
    else:
        R10, R12, centers = poses
        R10 = np.asarray(R10, dtype=float)
        R12 = np.asarray(R12, dtype=float)
        centers = np.asarray(centers, dtype=float).reshape(3, 3)
    R2G = R12.T @ R10
    frames = [(np.eye(3), centers[0]), (R10, centers[1]), (R2G, centers[2])]

    plane = None
    if cfg.mode == "planar":
        lo, hi = cfg.depth_range
        # Random plane orientation, rejecting only near-edge-on planes the
        # cameras could not observe; anchored where the mid-shell forward
        # ray meets it.
        while True:
            normal = rng_pose.normal(size=3)
            normal /= np.linalg.norm(normal)
            if normal[2] < 0:
                normal = -normal
            if normal[2] >= 0.3:
                break
        offset = float(0.5 * (lo + hi) * normal[2])
        plane = (normal, offset)

    intr = cfg.intrinsics
    scene = ThreeViewScene(
        config=cfg,
        intrinsics=intr,
        gt_r10=R10,
        gt_r12=R12,
        gt_translations=centers,
        plane=plane,
    )

    sigma = cfg.noise_std
    if cfg.n_points:
        sampler = _Sampler(cfg, frames, _stream(cfg.rng_seed, 1), plane)
        pts = sampler.draw(cfg.n_points)
        noise = _stream(cfg.rng_seed, 3).normal(size=(cfg.n_points, 3, 2))
        pixels = np.empty((cfg.n_points, 3, 2))
        for k, (R_kG, center) in enumerate(frames):
            pixels[:, k] = intr.project(_world_to_cam(R_kG, center, pts))
        pixels += sigma * noise
        scene.points_3d = pts
        scene.point_tracks = [
            point_track_from_pixels(pixels[i], intr, sigma=sigma) for i in range(cfg.n_points)
        ]
        scene.point_outliers = np.zeros(cfg.n_points, dtype=bool)

    if cfg.n_lines:
        sampler = _Sampler(cfg, frames, _stream(cfg.rng_seed, 2), plane)
        ends = sampler.draw(2 * cfg.n_lines).reshape(cfg.n_lines, 2, 3)
        noise = _stream(cfg.rng_seed, 4).normal(size=(cfg.n_lines, 3, 2, 2))
        eppix = np.empty((cfg.n_lines, 3, 2, 2))
        for k, (R_kG, center) in enumerate(frames):
            cam = _world_to_cam(R_kG, center, ends.reshape(-1, 3)).reshape(cfg.n_lines, 2, 3)
            eppix[:, k] = intr.project(cam)
        eppix += sigma * noise
        scene.line_endpoints_3d = ends
        scene.line_tracks = [
            line_track_from_endpoints(eppix[i], intr, sigma=sigma) for i in range(cfg.n_lines)
        ]
        scene.line_outliers = np.zeros(cfg.n_lines, dtype=bool)

    if cfg.outlier_fraction > 0.0:
        scene = inject_outliers(scene, cfg.outlier_fraction)
    return scene


def inject_outliers(
    scene: ThreeViewScene, fraction: float, rng: np.random.Generator | int | None = None
) -> ThreeViewScene:
    """Replace a fraction of tracks (per feature type) by mismatched ones.

    Each selected track is rebuilt from observations of independent random
    landmarks, one per frame, so it is geometrically inconsistent.  The
    returned scene shares the untouched tracks with the input; outlier masks
    are updated.  Inlier noise draws are unaffected by construction.
    """
    if not (0.0 <= fraction < 1.0):
        raise ValueError("fraction must be in [0, 1)")
    if rng is None:
        rng = _stream(scene.config.rng_seed, 5)
    elif isinstance(rng, (int, np.integer)):
        rng = _stream(int(rng), 5)

    cfg = scene.config
    intr = scene.intrinsics
    R2G = scene.gt_r12.T @ scene.gt_r10
    frames = [
        (np.eye(3), scene.gt_translations[0]),
        (scene.gt_r10, scene.gt_translations[1]),
        (R2G, scene.gt_translations[2]),
    ]
    sampler = _Sampler(cfg, frames, rng, scene.plane)
    sigma = cfg.noise_std

    out = ThreeViewScene(
        config=cfg,
        intrinsics=intr,
        gt_r10=scene.gt_r10,
        gt_r12=scene.gt_r12,
        gt_translations=scene.gt_translations,
        point_tracks=list(scene.point_tracks),
        line_tracks=list(scene.line_tracks),
        point_outliers=scene.point_outliers.copy(),
        line_outliers=scene.line_outliers.copy(),
        points_3d=scene.points_3d,
        line_endpoints_3d=scene.line_endpoints_3d,
        plane=scene.plane,
    )

    n_pts = len(out.point_tracks)
    k_pts = int(round(fraction * n_pts))
    if k_pts:
        chosen = rng.choice(n_pts, size=k_pts, replace=False)
        for i in chosen:
            lms = sampler.draw(3)  # an unrelated landmark per frame
            pix = np.empty((3, 2))
            for k, (R_kG, center) in enumerate(frames):
                pix[k] = intr.project(_world_to_cam(R_kG, center, lms[k : k + 1]))[0]
            pix += sigma * rng.normal(size=(3, 2))
            out.point_tracks[i] = point_track_from_pixels(pix, intr, sigma=sigma)
            out.point_outliers[i] = True

    n_lns = len(out.line_tracks)
    k_lns = int(round(fraction * n_lns))
    if k_lns:
        chosen = rng.choice(n_lns, size=k_lns, replace=False)
        for i in chosen:
            lms = sampler.draw(6).reshape(3, 2, 3)  # an unrelated line per frame
            ep = np.empty((3, 2, 2))
            for k, (R_kG, center) in enumerate(frames):
                ep[k] = intr.project(_world_to_cam(R_kG, center, lms[k]))
            ep += sigma * rng.normal(size=(3, 2, 2))
            out.line_tracks[i] = line_track_from_endpoints(ep, intr, sigma=sigma)
            out.line_outliers[i] = True
    return out
