"""Geodesic active contours.

The energy is the weighted length ``sum_seg G(midpoint) |P[i+1] - P[i]|`` of
a polygon in an edge-indicator field ``G``.  Its raw variation is exact, so
the two descent flows differ only in the inner product used to turn it into
a velocity: unit weights (parameter space) or arclength weights.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import curve as _curve
from .curve import ClosedCurve, CurveGeometry
from .grid import ScalarField, bilinear, gaussian_smooth, grad_arrays
from .trace import PRE_REMESH, EvolutionTrace
from .variation import (DiscreteFunctional, InnerProductKind, MetricWeights,
                        gradient_from_variation, metric_weights)

log = logging.getLogger(__name__)

CFL = 0.4
MAX_BACKTRACK = 30


@dataclass(frozen=True)
class EdgeIndicatorParams:
    sigma: float = 1.0
    contrast: float = 0.1

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if not self.contrast > 0:
            raise ValueError("contrast must be positive")


def edge_indicator(image: ScalarField, params: EdgeIndicatorParams = EdgeIndicatorParams()) -> ScalarField:
    """``G = 1 / (1 + |grad I_sigma|^2 / contrast^2)``, in (0, 1]."""
    smooth = gaussian_smooth(image, params.sigma)
    gx, gy = grad_arrays(smooth.values, image.spec.hx, image.spec.hy)
    return image.with_values(1.0 / (1.0 + (gx * gx + gy * gy) / params.contrast ** 2))


@dataclass(frozen=True, eq=False)
class GacState:
    curve: ClosedCurve
    g_field: ScalarField

    def __post_init__(self):
        g = self.g_field.values
        if g.min() <= 0 or g.max() > 1:
            raise ValueError("edge indicator must take values in (0, 1]")

    @property
    def geometry(self) -> CurveGeometry:
        return _curve.geometry(self.curve)

    def moved(self, points) -> "GacState":
        return GacState(ClosedCurve(points, canonicalize=False), self.g_field)


def _energy(points: np.ndarray, g: ScalarField) -> float:
    seg = np.roll(points, -1, axis=0) - points
    mid = points + 0.5 * seg
    gm = bilinear(g.values, g.spec.hx, g.spec.hy, mid[:, 0], mid[:, 1])
    return float(np.sum(gm * np.linalg.norm(seg, axis=1)))


def _raw_variation(points: np.ndarray, g: ScalarField) -> np.ndarray:
    seg = np.roll(points, -1, axis=0) - points
    mid = points + 0.5 * seg
    lengths = np.linalg.norm(seg, axis=1)
    gm, gx, gy = bilinear(g.values, g.spec.hx, g.spec.hy, mid[:, 0], mid[:, 1], derivatives=True)
    # segment j = (P[j], P[j+1]); d|seg|/dP[j+1] = unit, d|seg|/dP[j] = -unit,
    # d midpoint / dP = 1/2 for both ends
    pull = 0.5 * np.column_stack([gx, gy]) * lengths[:, None]
    stretch = gm[:, None] * seg / lengths[:, None]
    return (pull - stretch) + np.roll(pull + stretch, 1, axis=0)


def gac_energy(state: GacState) -> float:
    return _energy(state.curve.points, state.g_field)


def gac_raw_variation(state: GacState) -> np.ndarray:
    """Exact partial derivatives of :func:`gac_energy`, shape ``(n, 2)``."""
    return _raw_variation(state.curve.points, state.g_field)


def _kind(kind) -> InnerProductKind:
    kind = InnerProductKind.parse(kind)
    if kind not in (InnerProductKind.PARAMETER_L2, InnerProductKind.GEOMETRIC_CURVE):
        raise ValueError(f"GAC flows use curve inner products, not {kind.value}")
    return kind


def gac_velocity(state: GacState, kind="geometric_curve", project_normal: bool = False) -> np.ndarray:
    """Descent velocity ``-raw / w`` per node.

    With ``project_normal`` the tangential part is dropped; it only moves
    nodes along the curve.
    """
    kind = _kind(kind)
    geo = state.geometry
    w = metric_weights(state.curve, kind)
    vel = -gradient_from_variation(gac_raw_variation(state), w)
    if project_normal:
        vel = np.sum(vel * geo.normals, axis=1)[:, None] * geo.normals
    return vel


def normal_speed(state: GacState, kind="geometric_curve") -> np.ndarray:
    """Velocity component along the inward normal at each node."""
    return np.sum(gac_velocity(state, kind) * state.geometry.normals, axis=1)


def continuum_velocity(state: GacState) -> np.ndarray:
    """Direct discretisation of ``-grad G + d/ds (G C_s)`` at the nodes.

    Diagnostic only: it agrees with the geometric velocity to second order
    on smooth, evenly sampled curves but is not the derivative of any
    discrete energy.
    """
    p = state.curve.points
    g = state.g_field
    geo = state.geometry
    gn, gx, gy = bilinear(g.values, g.spec.hx, g.spec.hy, p[:, 0], p[:, 1], derivatives=True)
    flux = gn[:, None] * geo.tangents
    ds = 2.0 * geo.node_weights
    d_flux = (np.roll(flux, -1, axis=0) - np.roll(flux, 1, axis=0)) / ds[:, None]
    return -np.column_stack([gx, gy]) + d_flux


class GacFunctional(DiscreteFunctional):
    """:func:`gac_energy` as a function of raw node coordinates."""

    layout = "curve"

    def __init__(self, g_field: ScalarField):
        self.g_field = g_field

    def evaluate(self, state):
        return _energy(np.asarray(state, dtype=float), self.g_field)

    def raw_variation(self, state):
        return _raw_variation(np.asarray(state, dtype=float), self.g_field)

    def weights(self, state, kind) -> MetricWeights:
        return metric_weights(ClosedCurve(state, canonicalize=False), _kind(kind))

    def gradient(self, state, kind):
        return -gac_velocity(GacState(ClosedCurve(state, canonicalize=False), self.g_field), kind)


def evolve_gac(state: GacState, dt: float, steps: int, kind="geometric_curve",
               resample_every: int = 10, trace: bool = True, spacing: float | None = None,
               project_normal: bool = False, snapshot_every: int = 0) -> tuple[ClosedCurve, EvolutionTrace]:
    """Explicit Euler descent ``P <- P + dt_eff * velocity``.

    ``dt_eff = min(dt, 0.4 * min segment / max node speed)``, halved further
    while a step would raise the energy.  The curve is resampled to
    ``spacing`` (default: initial mean segment length) every
    ``resample_every`` steps; a curve too short for 8 nodes at that spacing
    counts as collapsed and stops the run.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if steps < 1:
        raise ValueError("steps must be at least 1")
    kind = _kind(kind)
    spacing = spacing or float(np.mean(state.curve.segment_lengths()))
    out = EvolutionTrace()
    energy = gac_energy(state)
    vel = gac_velocity(state, kind, project_normal)
    t = 0.0
    if trace:
        out.record(0, t, energy, np.max(np.linalg.norm(vel, axis=1)),
                   curve_length=_curve.length(state.curve), nodes=len(state.curve))
    if snapshot_every:
        out.snapshots.append((0, state.curve))

    for step in range(1, steps + 1):
        speed = np.linalg.norm(vel, axis=1)
        vmax = float(speed.max())
        if vmax == 0.0:
            out.finish("stationary", step - 1)
            return state.curve, out
        dt_cfl = dt_try = min(dt, CFL * float(state.curve.segment_lengths().min()) / vmax)
        for _ in range(MAX_BACKTRACK):
            try:
                cand = state.moved(state.curve.points + dt_try * vel)
                e_new = gac_energy(cand)
            except _curve.DegenerateCurveError:
                e_new = np.inf
            if e_new <= energy:
                break
            dt_try *= 0.5
        else:
            out.finish("stalled", step - 1)
            return state.curve, out
        t += dt_try
        extras = {}
        if resample_every and step % resample_every == 0:
            total = _curve.length(cand.curve)
            if round(total / spacing) < _curve.MIN_NODES:
                out.finish("collapsed", step)
                log.info("curve collapsed at step %d (length %.3g)", step, total)
                return cand.curve, out
            extras[PRE_REMESH] = e_new
            cand = GacState(_curve.resample(cand.curve, spacing), state.g_field)
            e_new = gac_energy(cand)
        state, energy = cand, e_new
        try:
            vel = gac_velocity(state, kind, project_normal)
        except _curve.DegenerateCurveError:
            out.finish("collapsed", step)
            return state.curve, out
        if trace:
            out.record(step, t, energy, np.max(np.linalg.norm(vel, axis=1)),
                       curve_length=_curve.length(state.curve), nodes=len(state.curve),
                       dt=dt_try, dt_clamped=float(dt_cfl < dt), **extras)
        if snapshot_every and step % snapshot_every == 0:
            out.snapshots.append((step, state.curve))
    out.finish("completed", steps)
    return state.curve, out
