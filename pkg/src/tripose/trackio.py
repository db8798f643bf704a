"""Plain-text track file format (``tvp/1``).

Line-oriented records::

    tvp/1
    K <fx> <fy> <cx> <cy>
    P <id> <u0> <v0> <u1> <v1> <u2> <v2>
    L <id> <x0a> <y0a> <x0b> <y0b> <x1a> <y1a> ... <x2b> <y2b>

``P`` rows hold one pixel per frame (``nan nan`` for an unobserved frame,
at least two frames required); ``L`` rows hold two segment endpoints per
frame for all three frames.  Blank lines and lines starting with ``#`` are
ignored.  Floats are written with full round-trip precision so an exported
scene re-ingests to bit-identical tracks.

Structural problems (bad header, missing or malformed intrinsics, unknown
record tag) raise :class:`TrackFileError` with the line number; malformed
feature records are skipped and counted as warnings.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .camera import CameraIntrinsics
from .tracks import LineTrack, PointTrack, line_track_from_endpoints, point_track_from_pixels

__all__ = ["TrackFileError", "IngestResult", "write_tracks", "export_scene", "ingest_tracks"]

_HEADER = "tvp/1"
DEFAULT_SIGMA = 1.0


class TrackFileError(ValueError):
    """Structural error in a track file (carries the offending line number)."""


@dataclass
class IngestResult:
    intrinsics: CameraIntrinsics
    point_tracks: list[PointTrack]
    line_tracks: list[LineTrack]
    warnings: list[str] = field(default_factory=list)

    @property
    def n_warnings(self) -> int:
        return len(self.warnings)


def _fmt(values) -> str:
    return " ".join(format(v, ".17g") for v in values)


def write_tracks(
    path, intrinsics: CameraIntrinsics, point_tracks, line_tracks
) -> None:
    """Write tracks to ``path`` in the ``tvp/1`` format."""
    out = [_HEADER, f"K {_fmt([intrinsics.fx, intrinsics.fy, intrinsics.cx, intrinsics.cy])}"]
    for i, t in enumerate(point_tracks or []):
        out.append(f"P {i} {_fmt(np.asarray(t.pixels).reshape(-1))}")
    for i, t in enumerate(line_tracks or []):
        out.append(f"L {i} {_fmt(np.asarray(t.endpoints).reshape(-1))}")
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def export_scene(path, scene) -> None:
    """Write the observations of a synthetic scene to a track file."""
    write_tracks(path, scene.intrinsics, scene.point_tracks, scene.line_tracks)


def ingest_tracks(path, sigma: float = DEFAULT_SIGMA) -> IngestResult:
    """Read a ``tvp/1`` track file.

    Args:
        path: file to read.
        sigma: pixel noise std assigned to every observation (the file does
            not carry covariances).

    Returns:
        :class:`IngestResult` with validated tracks and per-record warnings.

    Raises:
        TrackFileError: on structural problems, with the line number.
    """
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0].strip() != _HEADER:
        raise TrackFileError("line 1: missing 'tvp/1' header")

    intrinsics = None
    points: list[PointTrack] = []
    linetracks: list[LineTrack] = []
    warnings: list[str] = []

    for lineno, raw in enumerate(lines[1:], start=2):
        s = raw.strip()
        if not s or s.startswith("#"):
            continue
        parts = s.split()
        tag = parts[0]
        if tag == "K":
            if len(parts) != 5:
                raise TrackFileError(f"line {lineno}: intrinsics need 4 values")
            try:
                fx, fy, cx, cy = (float(v) for v in parts[1:])
                intrinsics = CameraIntrinsics(fx=fx, fy=fy, cx=cx, cy=cy)
            except ValueError as err:
                raise TrackFileError(f"line {lineno}: bad intrinsics: {err}") from err
            continue
        if tag not in ("P", "L"):
            raise TrackFileError(f"line {lineno}: unknown record tag {tag!r}")
        if intrinsics is None:
            raise TrackFileError(f"line {lineno}: feature record before intrinsics line")
        if tag == "P":
            if len(parts) != 8:
                warnings.append(f"line {lineno}: point record needs id + 6 values; skipped")
                continue
            try:
                vals = np.array([float(v) for v in parts[2:]]).reshape(3, 2)
            except ValueError:
                warnings.append(f"line {lineno}: unparsable point record; skipped")
                continue
            observed = ~np.isnan(vals[:, 0])
            if (np.isnan(vals[:, 0]) != np.isnan(vals[:, 1])).any():
                warnings.append(f"line {lineno}: half-missing observation; skipped")
                continue
            if observed.sum() < 2:
                warnings.append(f"line {lineno}: point track with <2 frames; skipped")
                continue
            points.append(point_track_from_pixels(vals, intrinsics, sigma=sigma))
        else:
            if len(parts) != 14:
                warnings.append(f"line {lineno}: line record needs id + 12 values; skipped")
                continue
            try:
                vals = np.array([float(v) for v in parts[2:]]).reshape(3, 2, 2)
            except ValueError:
                warnings.append(f"line {lineno}: unparsable line record; skipped")
                continue
            if np.isnan(vals).any():
                warnings.append(f"line {lineno}: line track with missing frames; skipped")
                continue
            try:
                linetracks.append(line_track_from_endpoints(vals, intrinsics, sigma=sigma))
            except ValueError as err:
                warnings.append(f"line {lineno}: {err}; skipped")
                continue

    if intrinsics is None:
        raise TrackFileError("missing 'K fx fy cx cy' intrinsics line")
    return IngestResult(
        intrinsics=intrinsics,
        point_tracks=points,
        line_tracks=linetracks,
        warnings=warnings,
    )
