"""Synthetic inputs generated from a seed, so runs and tests need no data files."""

from __future__ import annotations

import numpy as np

from .curve import ClosedCurve
from .grid import GridSpec, ScalarField


def disk_image(n: int = 128, radius: float = 20.0, center=None, inside: float = 1.0,
               outside: float = 0.0) -> ScalarField:
    """Crisp two-value disk; a pixel is inside when its centre is."""
    spec = GridSpec(n, n)
    cx, cy = center if center is not None else ((n - 1) / 2, (n - 1) / 2)
    X, Y = spec.coordinates()
    return ScalarField(spec, np.where(np.hypot(X - cx, Y - cy) <= radius, inside, outside))


def disk_mask(n: int = 128, radius: float = 20.0, center=None) -> np.ndarray:
    return disk_image(n, radius, center).values > 0.5


def noisy_disk(n: int = 128, radius: float = 20.0, noise: float = 0.1, seed: int = 0,
               center=None) -> ScalarField:
    """:func:`disk_image` plus i.i.d. Gaussian noise (values are not clipped)."""
    clean = disk_image(n, radius, center)
    rng = np.random.default_rng(seed)
    return clean.with_values(clean.values + noise * rng.standard_normal(clean.values.shape))


def circle_sdf(spec: GridSpec, radius: float, center=None) -> ScalarField:
    """Signed distance to a circle, positive inside."""
    X, Y = spec.coordinates()
    if center is None:
        center = ((spec.nx - 1) * spec.hx / 2, (spec.ny - 1) * spec.hy / 2)
    return ScalarField(spec, radius - np.hypot(X - center[0], Y - center[1]))


def checkerboard_phi(spec: GridSpec, period: float = 16.0) -> ScalarField:
    X, Y = spec.coordinates()
    return ScalarField(spec, np.sin(np.pi * X / period) * np.sin(np.pi * Y / period))


def ellipse_curve(n: int = 256, a: float = 40.0, b: float = 28.0, center=(64.0, 64.0)) -> ClosedCurve:
    return ClosedCurve.ellipse(a, b, n, center)


def smooth_random_image(n: int = 32, seed: int = 0, modes: int = 3) -> ScalarField:
    """Sum of a few low-frequency cosines with seeded coefficients, in [0, 1]."""
    rng = np.random.default_rng(seed)
    spec = GridSpec(n, n)
    X, Y = spec.coordinates()
    v = np.zeros(spec.shape)
    for k in range(1, modes + 1):
        for l in range(1, modes + 1):
            a, px, py = rng.normal(), rng.uniform(0, 2 * np.pi), rng.uniform(0, 2 * np.pi)
            v += a * np.cos(2 * np.pi * k * X / n + px) * np.cos(2 * np.pi * l * Y / n + py) / (k + l)
    v = (v - v.min()) / (v.max() - v.min())
    return ScalarField(spec, v)
