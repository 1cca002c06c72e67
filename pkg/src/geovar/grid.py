"""Scalar and vector fields on a regular 2D grid.

Storage is row-major: ``values[row, col]`` with ``x`` running along columns
and ``y`` along rows, so a point ``(x, y)`` in physical units sits at
``(col, row) = (x / hx, y / hy)``.  Every operator here uses Neumann
boundaries realised by edge replication.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

SCHEMES = ("central", "forward", "backward")


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    hx: float = 1.0
    hy: float = 1.0

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ValueError(f"grid must be at least 3x3, got {self.nx}x{self.ny}")
        if not (self.hx > 0 and self.hy > 0):
            raise ValueError("grid spacing must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Physical ``(x, y)`` coordinate arrays, each of shape ``(ny, nx)``."""
        x = np.arange(self.nx) * self.hx
        y = np.arange(self.ny) * self.hy
        return np.meshgrid(x, y)


@dataclass(frozen=True, eq=False)
class ScalarField:
    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1 and values.size == self.spec.nx * self.spec.ny:
            values = values.reshape(self.spec.shape)
        if values.shape != self.spec.shape:
            raise ValueError(f"values shape {values.shape} does not match grid {self.spec.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_array(cls, values, hx: float = 1.0, hy: float = 1.0) -> "ScalarField":
        values = np.asarray(values, dtype=float)
        ny, nx = values.shape
        return cls(GridSpec(nx, ny, hx, hy), values)

    @classmethod
    def constant(cls, spec: GridSpec, value: float) -> "ScalarField":
        return cls(spec, np.full(spec.shape, float(value)))

    def with_values(self, values) -> "ScalarField":
        return ScalarField(self.spec, values)


@dataclass(frozen=True, eq=False)
class VectorField:
    spec: GridSpec
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        for name in ("u", "v"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != self.spec.shape:
                raise ValueError(f"component {name} has shape {arr.shape}, expected {self.spec.shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def norm(self) -> np.ndarray:
        return np.hypot(self.u, self.v)


# -- array-level stencils ---------------------------------------------------
#
# These work on raw arrays along one axis and are shared by the PDE modules,
# which keep their hot loops on plain ndarrays.

def diff(a: np.ndarray, axis: int, h: float, scheme: str = "central") -> np.ndarray:
    """One-dimensional difference quotient of ``a`` along ``axis`` with edge replication."""
    p = np.pad(a, [(1, 1) if ax == axis else (0, 0) for ax in range(a.ndim)], mode="edge")
    n = a.shape[axis]

    def sl(start):
        return tuple(slice(start, start + n) if ax == axis else slice(None) for ax in range(a.ndim))

    if scheme == "central":
        return (p[sl(2)] - p[sl(0)]) / (2.0 * h)
    if scheme == "forward":
        return (p[sl(2)] - p[sl(1)]) / h
    if scheme == "backward":
        return (p[sl(1)] - p[sl(0)]) / h
    raise ValueError(f"unknown scheme {scheme!r}")


def grad_arrays(a: np.ndarray, hx: float, hy: float, scheme: str = "central"):
    return diff(a, 1, hx, scheme), diff(a, 0, hy, scheme)


def central_adjoint_div(u: np.ndarray, v: np.ndarray, hx: float, hy: float) -> np.ndarray:
    """Negative transpose of the replicate-boundary central gradient.

    Identical to the central divergence away from the outermost ring; on the
    ring it is the exact adjoint, which makes quadratic forms built on the
    central gradient have this as their discrete variation.
    """
    return -(_central_transpose(u, 1, hx) + _central_transpose(v, 0, hy))


def _central_transpose(w: np.ndarray, axis: int, h: float) -> np.ndarray:
    w = np.moveaxis(w, axis, 0)
    out = np.zeros_like(w)
    # row i of D reads (f[i+1] - f[i-1]) / 2h with clamped indices
    n = w.shape[0]
    lo = np.maximum(np.arange(n) - 1, 0)
    hi = np.minimum(np.arange(n) + 1, n - 1)
    np.add.at(out, hi, w)
    np.subtract.at(out, lo, w)
    return np.moveaxis(out / (2.0 * h), 0, axis)


# -- field-level operations -------------------------------------------------

def gradient(f: ScalarField, scheme: str = "central") -> VectorField:
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    s = f.spec
    u, v = grad_arrays(f.values, s.hx, s.hy, scheme)
    return VectorField(s, u, v)


def divergence(w: VectorField, scheme: str = "central") -> ScalarField:
    """Divergence of ``w``.

    ``upwind_pair`` takes backward differences, the partner of a
    forward-difference gradient in the usual curvature stencil.
    """
    s = w.spec
    if scheme == "central":
        inner = "central"
    elif scheme == "upwind_pair":
        inner = "backward"
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return ScalarField(s, diff(w.u, 1, s.hx, inner) + diff(w.v, 0, s.hy, inner))


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = math.ceil(3.0 * sigma)
    x = np.arange(-radius, radius + 1, dtype=float)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_smooth(f: ScalarField, sigma: float) -> ScalarField:
    """Separable Gaussian blur in pixel units (kernel radius ``ceil(3 sigma)``)."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return f
    k = gaussian_kernel(sigma)
    out = ndimage.convolve1d(f.values, k, axis=0, mode="nearest")
    out = ndimage.convolve1d(out, k, axis=1, mode="nearest")
    return f.with_values(out)


def bilinear(values: np.ndarray, hx: float, hy: float, x, y, derivatives: bool = False):
    """Vectorised bilinear interpolation at physical coordinates ``(x, y)``.

    Coordinates are clamped to the grid.  With ``derivatives=True`` also
    returns the exact partial derivatives of the interpolant; they vanish in
    a clamped direction.
    """
    ny, nx = values.shape
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    gx = x / hx
    gy = y / hy
    inside_x = (gx > 0) & (gx < nx - 1)
    inside_y = (gy > 0) & (gy < ny - 1)
    gx = np.clip(gx, 0.0, nx - 1.0)
    gy = np.clip(gy, 0.0, ny - 1.0)
    i0 = np.minimum(np.floor(gx).astype(int), nx - 2)
    j0 = np.minimum(np.floor(gy).astype(int), ny - 2)
    tx = gx - i0
    ty = gy - j0
    f00 = values[j0, i0]
    f10 = values[j0, i0 + 1]
    f01 = values[j0 + 1, i0]
    f11 = values[j0 + 1, i0 + 1]
    val = (f00 * (1 - tx) * (1 - ty) + f10 * tx * (1 - ty)
           + f01 * (1 - tx) * ty + f11 * tx * ty)
    if not derivatives:
        return val
    dx = ((f10 - f00) * (1 - ty) + (f11 - f01) * ty) / hx
    dy = ((f01 - f00) * (1 - tx) + (f11 - f10) * tx) / hy
    return val, np.where(inside_x, dx, 0.0), np.where(inside_y, dy, 0.0)


def bilinear_sample(f: ScalarField, x: float, y: float) -> float:
    return float(bilinear(f.values, f.spec.hx, f.spec.hy, x, y))
