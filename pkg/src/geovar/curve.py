"""Closed planar polygons and their discrete differential geometry.

Orientation follows the mathematical convention (``y`` up): a canonical
curve has positive signed area, its inward normal is the tangent rotated by
+90 degrees and a convex curve has positive curvature.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

MIN_SEGMENT = 1e-9
MIN_NODES = 8


class DegenerateCurveError(ValueError):
    pass


def signed_area(points: np.ndarray) -> float:
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


@dataclass(frozen=True, eq=False)
class ClosedCurve:
    """Cyclic polygon; node ``n`` is identified with node 0.

    Clockwise input is reversed (keeping node 0 first) unless
    ``canonicalize=False``.  Fewer than :data:`MIN_NODES` nodes are accepted
    for bookkeeping (lengths, CSV export) but not by :func:`geometry`.
    """

    points: np.ndarray
    canonicalize: bool = True

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
            raise DegenerateCurveError("a closed curve needs at least 3 (x, y) points")
        if not np.all(np.isfinite(pts)):
            raise DegenerateCurveError("curve has non-finite coordinates")
        seg = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
        if seg.min() <= MIN_SEGMENT:
            i = int(np.argmin(seg))
            raise DegenerateCurveError(f"nodes {i} and {(i + 1) % len(pts)} coincide")
        if self.canonicalize and signed_area(pts) < 0:
            pts = np.concatenate([pts[:1], pts[:0:-1]])
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    @classmethod
    def circle(cls, radius: float, n: int, center=(0.0, 0.0), phase: float = 0.0) -> "ClosedCurve":
        return cls.ellipse(radius, radius, n, center, phase)

    @classmethod
    def ellipse(cls, a: float, b: float, n: int, center=(0.0, 0.0), phase: float = 0.0) -> "ClosedCurve":
        t = phase + 2 * np.pi * np.arange(n) / n
        return cls(np.column_stack([center[0] + a * np.cos(t), center[1] + b * np.sin(t)]))

    def segments(self) -> np.ndarray:
        """Vectors ``P[i+1] - P[i]``, shape ``(n, 2)``."""
        return np.roll(self.points, -1, axis=0) - self.points

    def segment_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.segments(), axis=1)

    def arclength_nodes(self) -> np.ndarray:
        """Cumulative arclength at each node, starting from 0 at node 0."""
        return np.concatenate([[0.0], np.cumsum(self.segment_lengths())[:-1]])


@dataclass(frozen=True, eq=False)
class CurveGeometry:
    tangents: np.ndarray
    normals: np.ndarray
    curvature: np.ndarray
    node_weights: np.ndarray
    total_length: float


def length(c: ClosedCurve | np.ndarray) -> float:
    pts = c.points if isinstance(c, ClosedCurve) else np.asarray(c, dtype=float)
    return float(np.sum(np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)))


def geometry(c: ClosedCurve) -> CurveGeometry:
    """Per-node tangents, inward normals, Menger curvature and ``ds`` weights."""
    if len(c) < MIN_NODES:
        raise DegenerateCurveError(f"geometry needs at least {MIN_NODES} nodes, got {len(c)}")
    p = c.points
    back = p - np.roll(p, 1, axis=0)        # P[i] - P[i-1]
    fwd = np.roll(p, -1, axis=0) - p        # P[i+1] - P[i]
    chord = back + fwd                      # P[i+1] - P[i-1]
    lb = np.linalg.norm(back, axis=1)
    lf = np.linalg.norm(fwd, axis=1)
    lc = np.linalg.norm(chord, axis=1)
    if lc.min() <= MIN_SEGMENT:
        i = int(np.argmin(lc))
        raise DegenerateCurveError(f"neighbours of node {i} coincide")
    tangents = chord / lc[:, None]
    normals = np.column_stack([-tangents[:, 1], tangents[:, 0]])
    cross = back[:, 0] * fwd[:, 1] - back[:, 1] * fwd[:, 0]
    curvature = 2.0 * cross / (lb * lf * lc)
    weights = 0.5 * (lb + lf)
    return CurveGeometry(tangents, normals, curvature, weights, float(lf.sum()))


def _polyline_at(c: ClosedCurve, s: np.ndarray) -> np.ndarray:
    """Points at arclength positions ``s`` (mod total length) along the polygon."""
    pts = np.vstack([c.points, c.points[:1]])
    cum = np.concatenate([[0.0], np.cumsum(c.segment_lengths())])
    s = np.mod(s, cum[-1])
    return np.column_stack([np.interp(s, cum, pts[:, 0]), np.interp(s, cum, pts[:, 1])])


def resample(c: ClosedCurve, target_spacing: float) -> ClosedCurve:
    """Equal-arclength resampling of the polygon, starting at node 0."""
    if not target_spacing > 0:
        raise ValueError("target_spacing must be positive")
    total = length(c)
    n = max(MIN_NODES, int(round(total / target_spacing)))
    s = total * np.arange(n) / n
    return ClosedCurve(_polyline_at(c, s))


def reparameterize(c: ClosedCurve, phi: Callable[[np.ndarray], np.ndarray], n: int | None = None) -> ClosedCurve:
    """Place nodes at normalized arclength ``phi(i/n)`` along ``c``.

    ``phi`` must be a strictly increasing bijection of [0, 1]; it is checked
    on a dense grid before use.
    """
    n = len(c) if n is None else n
    probe = np.asarray(phi(np.linspace(0.0, 1.0, 4097)), dtype=float)
    if abs(probe[0]) > 1e-12 or abs(probe[-1] - 1.0) > 1e-12:
        raise ValueError("phi must map 0 to 0 and 1 to 1")
    if np.any(np.diff(probe) <= 0):
        raise ValueError("phi must be strictly increasing")
    t = np.asarray(phi(np.arange(n) / n), dtype=float)
    return ClosedCurve(_polyline_at(c, t * length(c)))
