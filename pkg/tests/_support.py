"""Shared constructions for the GAC invariance checks."""

import numpy as np

from geovar.curve import ClosedCurve, reparameterize
from geovar.gac import EdgeIndicatorParams, GacState, edge_indicator, normal_speed
from geovar.grid import GridSpec, ScalarField

SKEW = 0.5  # phi'(t) = 1 + SKEW cos(2 pi t) spans [0.5, 1.5]: a 3:1 node-density ratio


def skew_map(t):
    return t + SKEW * np.sin(2 * np.pi * t) / (2 * np.pi)


def blob_edge_field(n=128):
    spec = GridSpec(n, n)
    X, Y = spec.coordinates()
    img = ScalarField(spec, np.exp(-((X - 70) ** 2 + (Y - 60) ** 2) / (2 * 30.0 ** 2)))
    return edge_indicator(img, EdgeIndicatorParams(2.0, 0.05))


def invariance_pair(g, n=256):
    """Uniform and skewed samplings of one dense ellipse, as GAC states."""
    dense = ClosedCurve.ellipse(40.0, 28.0, 20000, center=(64.2, 63.7))
    uniform = reparameterize(dense, lambda t: t, n)
    skewed = reparameterize(dense, skew_map, n)
    return GacState(uniform, g), GacState(skewed, g)


def speed_comparison(g, kind, n=256):
    """Normal speeds of the skewed copy and of the uniform copy at the same points.

    The uniform speeds are interpolated (periodically, in normalized
    arclength) to the arclength positions of the skewed nodes.
    """
    u, s = invariance_pair(g, n)
    vu = normal_speed(u, kind)
    vs = normal_speed(s, kind)
    t_u = np.arange(n) / n
    t_s = skew_map(np.arange(n) / n)
    at_s = np.interp(t_s, np.append(t_u, 1.0), np.append(vu, vu[0]))
    return vs, at_s, float(np.max(np.abs(u.geometry.node_weights)) / np.min(s.geometry.node_weights))


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def report(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
