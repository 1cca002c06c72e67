import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geovar.curve import (ClosedCurve, DegenerateCurveError, geometry, length, reparameterize,
                          resample, signed_area)


def polyline_distance(p, poly):
    """Distance from point ``p`` to a closed polyline (independent oracle)."""
    a = poly
    b = np.roll(poly, -1, axis=0)
    ab = b - a
    t = np.clip(np.sum((p - a) * ab, axis=1) / np.sum(ab * ab, axis=1), 0, 1)
    return np.min(np.linalg.norm(a + t[:, None] * ab - p, axis=1))


def test_construction_and_orientation():
    sq = [(0, 0), (0, 1), (1, 1), (1, 0)]  # clockwise
    c = ClosedCurve(sq)
    assert signed_area(c.points) > 0
    assert np.array_equal(c.points[0], [0, 0])
    assert signed_area(ClosedCurve(sq, canonicalize=False).points) < 0


def test_degenerate_inputs_rejected():
    with pytest.raises(DegenerateCurveError):
        ClosedCurve([(0, 0), (1, 0)])
    with pytest.raises(DegenerateCurveError):
        ClosedCurve([(0, 0), (0, 0), (1, 1), (1, 0)])
    with pytest.raises(DegenerateCurveError):
        ClosedCurve([(0, 0), (np.inf, 0), (1, 1)])
    with pytest.raises(DegenerateCurveError):
        geometry(ClosedCurve([(0, 0), (1, 0), (1, 1), (0, 1)]))


def test_length_examples():
    assert length(ClosedCurve([(0, 0), (1, 0), (1, 1), (0, 1)])) == 4.0
    c = ClosedCurve.circle(3.0, 1024)
    assert abs(length(c) - 2 * np.pi * 3) / (2 * np.pi * 3) < 1e-4
    rev = ClosedCurve(c.points[::-1], canonicalize=False)
    assert abs(length(rev) - length(c)) < 1e-12


def test_circle_geometry():
    R = 20.0
    c = ClosedCurve.circle(R, 256, center=(5.0, -3.0))
    g = geometry(c)
    assert np.max(np.abs(g.curvature * R - 1)) < 1e-3
    assert abs(g.total_length - 2 * np.pi * R) / (2 * np.pi * R) < 1e-3
    toward = np.array([5.0, -3.0]) - c.points
    assert np.all(np.sum(g.normals * toward, axis=1) > 0)
    assert abs(g.node_weights.sum() - g.total_length) < 1e-10
    spacing = 2 * np.pi * R / 256
    assert np.max(np.abs(g.curvature - 1 / R)) <= 10 * (spacing / R) ** 2 / R


def test_collinear_nodes_have_zero_curvature():
    side = np.linspace(0, 1, 5)[:-1]
    pts = np.concatenate([np.column_stack([side, 0 * side]), np.column_stack([1 + 0 * side, side]),
                          np.column_stack([1 - side, 1 + 0 * side]), np.column_stack([0 * side, 1 - side])])
    g = geometry(ClosedCurve(pts))
    corners = np.arange(0, 16, 4)
    mid = np.setdiff1d(np.arange(16), corners)
    assert np.all(g.curvature[mid] == 0)
    assert np.all(g.curvature[corners] > 0)


def test_resample_uniform():
    c = ClosedCurve.circle(50.0, 1000)
    r = resample(c, 2.0)
    assert len(r) == round(length(c) / 2.0) == 157
    # nodes sit at equal arclength positions along the input polygon
    cum = np.concatenate([[0], np.cumsum(c.segment_lengths())])
    pos = []
    for p in r.points:
        d = np.linalg.norm(c.points - p, axis=1)
        i = int(np.argmin(d))
        cand = [(i - 1) % 1000, i]
        best = None
        for j in cand:
            a, b = c.points[j], c.points[(j + 1) % 1000]
            t = np.dot(p - a, b - a) / np.dot(b - a, b - a)
            if -1e-9 <= t <= 1 + 1e-9:
                best = cum[j] + t * np.linalg.norm(b - a)
        pos.append(best)
    gaps = np.diff(np.unwrap(np.array(pos), period=cum[-1]))
    assert np.ptp(gaps) < 1e-9
    assert abs(length(r) - length(c)) / length(c) <= 1e-3


def test_resample_fixed_point_and_minimum():
    c = ClosedCurve.circle(10.0, 64)
    spacing = length(c) / 64
    r = resample(c, spacing)
    assert np.max(np.abs(r.points - c.points)) < 1e-9
    tiny = resample(c, 100.0)
    assert len(tiny) == 8
    with pytest.raises(ValueError):
        resample(c, 0.0)


def test_reparameterize_identity():
    # identity keeps nodes only where they already sit at equal arclength
    c = ClosedCurve.circle(10, 100)
    r = reparameterize(c, lambda t: t)
    assert np.max(np.abs(r.points - c.points)) < 1e-12


def test_reparameterize_stays_on_polyline_and_keeps_length():
    c = ClosedCurve.ellipse(10, 6, 100, center=(2, 1))
    phi = lambda t: t + 0.1 * np.sin(2 * np.pi * t) / (2 * np.pi)  # noqa: E731
    r = reparameterize(c, phi, 4000)
    assert max(polyline_distance(p, c.points) for p in r.points[::37]) <= 1e-9
    dense = ClosedCurve.ellipse(10, 6, 20000)
    r2 = reparameterize(dense, phi, 20000)
    assert abs(length(r2) - length(dense)) / length(dense) < 1e-6


def test_reparameterize_rejects_bad_maps():
    c = ClosedCurve.circle(1.0, 16)
    with pytest.raises(ValueError):
        reparameterize(c, lambda t: t ** 2 * 0.5)
    with pytest.raises(ValueError):
        reparameterize(c, lambda t: np.where(t < 0.5, t, 0.5 + 0 * t) + (t == 1) * 0.5)


def test_geometry_invariant_under_reparameterization():
    R = 25.0
    base = ClosedCurve.circle(R, 4096)
    phi = lambda t: t + 0.3 * np.sin(2 * np.pi * t) / (2 * np.pi)  # noqa: E731
    skewed = resample(reparameterize(base, phi, 4096), length(base) / 256)
    uniform = resample(base, length(base) / 256)
    gs, gu = geometry(skewed), geometry(uniform)
    assert len(skewed) == len(uniform)
    assert np.max(np.abs(gs.curvature - gu.curvature)) * R < 1e-2
    assert np.max(np.linalg.norm(gs.normals - gu.normals, axis=1)) < 1e-2
    assert np.max(np.abs(gu.curvature - 1 / R)) * R < 1e-2


@settings(max_examples=30, deadline=None)
@given(a=st.floats(2, 50), b=st.floats(2, 50), n=st.integers(8, 200),
       phase=st.floats(0, 2 * np.pi))
def test_weights_sum_to_length(a, b, n, phase):
    c = ClosedCurve.ellipse(a, b, n, phase=phase)
    g = geometry(c)
    assert abs(g.node_weights.sum() - length(c)) < 1e-10 * length(c)
    assert np.all(g.curvature > 0)
    assert np.allclose(np.linalg.norm(g.tangents, axis=1), 1)
