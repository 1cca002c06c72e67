"""Inner products, gradients from first variations, and the gradient checker.

A descent flow needs two ingredients: the first variation of the energy
(a covector, one number per degree of freedom) and an inner product that
turns it into a vector.  With per-node or per-pixel weights ``w`` the
gradient is simply ``raw / w``; the choice of ``w`` is what separates the
naive parameter-space flows from the geometric ones.
"""

from __future__ import annotations

import abc
import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from . import curve as _curve
from . import levelset
from .grid import ScalarField

log = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-4
FD_RELATIVE_STEP = 1e-5


class InnerProductKind(enum.Enum):
    PARAMETER_L2 = "parameter_l2"
    GEOMETRIC_CURVE = "geometric_curve"
    GEOMETRIC_SURFACE = "geometric_surface"
    LEVEL_SET_CURVE_MEASURE = "level_set_curve_measure"

    @classmethod
    def parse(cls, name: "str | InnerProductKind") -> "InnerProductKind":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("-", "_")
        aliases = {
            "parameterl2": cls.PARAMETER_L2,
            "l2": cls.PARAMETER_L2,
            "geometriccurve": cls.GEOMETRIC_CURVE,
            "geometricsurface": cls.GEOMETRIC_SURFACE,
            "levelsetcurvemeasure": cls.LEVEL_SET_CURVE_MEASURE,
            "levelset": cls.LEVEL_SET_CURVE_MEASURE,
        }
        for kind in cls:
            if kind.value == key:
                return kind
        if key.replace("_", "") in aliases:
            return aliases[key.replace("_", "")]
        raise ValueError(f"unknown inner product {name!r}")


@dataclass(frozen=True)
class LevelSetMeasure:
    """Regularisation of the curve measure ``delta(phi) |grad phi| dx dy``."""

    eps_delta: float = 1.0
    eps_grad: float = 1e-8

    def __post_init__(self):
        if not (self.eps_delta > 0 and self.eps_grad > 0):
            raise ValueError("eps_delta and eps_grad must be positive")


@dataclass(frozen=True, eq=False)
class MetricWeights:
    weights: np.ndarray
    measure_name: str

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            bad = np.argwhere(~(np.isfinite(w) & (w > 0)))
            raise ValueError(f"{self.measure_name}: non-positive weight at {tuple(bad[0])}")
        object.__setattr__(self, "weights", w)


def metric_weights(state, kind, *, det_g: ScalarField | None = None,
                   level_set: LevelSetMeasure | None = None) -> MetricWeights:
    """Integration weights of the inner product ``kind`` at ``state``.

    ``state`` is a :class:`~geovar.curve.ClosedCurve` for curve products and a
    :class:`ScalarField` (or raw array) otherwise.  The surface product needs
    the metric determinant ``det_g``; it may also be read from ``state.det_g``.
    """
    kind = InnerProductKind.parse(kind)
    if kind is InnerProductKind.PARAMETER_L2:
        if isinstance(state, _curve.ClosedCurve):
            shape = (len(state),)
        elif isinstance(state, ScalarField):
            shape = state.values.shape
        else:
            shape = np.shape(state)
        return MetricWeights(np.ones(shape), "parameter")

    if kind is InnerProductKind.GEOMETRIC_CURVE:
        if not isinstance(state, _curve.ClosedCurve):
            state = _curve.ClosedCurve(np.asarray(state), canonicalize=False)
        return MetricWeights(_curve.geometry(state).node_weights, "arclength ds")

    if kind is InnerProductKind.GEOMETRIC_SURFACE:
        det = det_g if det_g is not None else getattr(state, "det_g", None)
        if det is None:
            raise ValueError("the surface inner product needs the metric determinant")
        if np.any(det.values <= 0):
            raise ValueError("metric determinant must be positive")
        return MetricWeights(np.sqrt(det.values) * det.spec.cell_area, "area sqrt(g) dA")

    ls = level_set or LevelSetMeasure()
    phi = state if isinstance(state, ScalarField) else ScalarField.from_array(state)
    _, delta = levelset.heaviside_delta(phi.values, ls.eps_delta)
    grad = levelset.grad_norm(phi.values, phi.spec.hx, phi.spec.hy)
    return MetricWeights((delta * grad + ls.eps_grad) * phi.spec.cell_area, "curve measure delta|grad phi|")


def _broadcast_weights(weights: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Align per-point weights with a state that carries extra components.

    Grid weights ``(ny, nx)`` lead a channel stack ``(k, ny, nx)``; curve
    weights ``(n,)`` trail the coordinates of ``(n, 2)``.
    """
    if weights.shape == tuple(shape[len(shape) - weights.ndim:]):
        return weights
    while weights.ndim < len(shape):
        weights = weights[..., None]
    return weights


def gradient_from_variation(raw, w: MetricWeights) -> np.ndarray:
    raw = np.asarray(raw, dtype=float)
    return raw / _broadcast_weights(w.weights, raw.shape)


class DiscreteFunctional(abc.ABC):
    """Discrete energy with its exact first variation.

    ``state`` is a plain array: ``(n, 2)`` node coordinates for curve
    functionals, ``(ny, nx)`` or ``(channels, ny, nx)`` pixel values for grid
    functionals.
    """

    layout = "grid"

    @abc.abstractmethod
    def evaluate(self, state: np.ndarray) -> float:
        ...

    @abc.abstractmethod
    def raw_variation(self, state: np.ndarray) -> np.ndarray:
        ...

    def weights(self, state: np.ndarray, kind: InnerProductKind) -> MetricWeights:
        if InnerProductKind.parse(kind) is InnerProductKind.PARAMETER_L2:
            return metric_weights(np.asarray(state)[..., 0] if self.layout == "curve" else state, kind)
        raise NotImplementedError(f"{type(self).__name__} does not define {kind}")

    def gradient(self, state: np.ndarray, kind: InnerProductKind) -> np.ndarray:
        """Gradient under ``kind``; subclasses return what their flow actually uses."""
        return gradient_from_variation(self.raw_variation(state), self.weights(state, kind))


class NonFiniteEnergyError(FloatingPointError):
    def __init__(self, side: str, value: float):
        super().__init__(f"energy is {value} at the {side} probe point")
        self.side = side


def fd_directional_derivative(F: DiscreteFunctional, state, direction, step: float) -> float:
    """Central difference quotient of ``F`` along ``direction``."""
    if not step > 0:
        raise ValueError("step must be positive")
    state = np.asarray(state, dtype=float)
    direction = np.asarray(direction, dtype=float)
    if direction.shape != state.shape:
        raise ValueError(f"direction shape {direction.shape} != state shape {state.shape}")
    plus = F.evaluate(state + step * direction)
    if not np.isfinite(plus):
        raise NonFiniteEnergyError("plus", plus)
    minus = F.evaluate(state - step * direction)
    if not np.isfinite(minus):
        raise NonFiniteEnergyError("minus", minus)
    return (plus - minus) / (2.0 * step)


def smooth_direction(shape: tuple[int, ...], rng: np.random.Generator, layout: str = "grid",
                     modes: int = 4) -> np.ndarray:
    """Low-frequency random probe direction, scaled to unit max-norm."""
    if layout == "curve":
        n = shape[0]
        t = 2 * np.pi * np.arange(n) / n
        k = np.arange(1, modes + 1)
        out = np.empty(shape)
        for c in range(shape[1]):
            a, b = rng.normal(size=(2, modes)) / k
            out[:, c] = rng.normal() + np.cos(np.outer(t, k)) @ a + np.sin(np.outer(t, k)) @ b
    else:
        ny, nx = shape[-2:]
        y = np.arange(ny)[:, None] / ny
        x = np.arange(nx)[None, :] / nx
        out = np.zeros(shape)
        for idx in np.ndindex(*shape[:-2]):
            acc = np.zeros((ny, nx))
            for kx in range(modes):
                for ky in range(modes):
                    amp = rng.normal() / (1 + kx + ky)
                    px, py = rng.uniform(0, 2 * np.pi, size=2)
                    acc += amp * np.cos(2 * np.pi * kx * x + px) * np.cos(2 * np.pi * ky * y + py)
            out[idx] = acc
    scale = np.max(np.abs(out))
    return out / scale if scale > 0 else out


@dataclass
class GradientCheckReport:
    kind: InnerProductKind
    tolerance: float
    rows: list[tuple[int, float, float, float]] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return max((r[3] for r in self.rows), default=0.0)

    @property
    def passed(self) -> bool:
        return bool(self.rows) and self.max_rel_error <= self.tolerance


def relative_error(lhs: float, rhs: float) -> float:
    denom = max(abs(lhs), abs(rhs))
    return 0.0 if denom == 0 else abs(lhs - rhs) / denom


def check_gradient(F: DiscreteFunctional, kind, state, trials: int = 20, seed: int = 0,
                   tolerance: float = DEFAULT_TOLERANCE, directions=None) -> GradientCheckReport:
    """Certify ``<grad F, eta>_kind == d/de F(state + e eta)`` for seeded smooth ``eta``.

    The left side uses the gradient the flow would use together with the
    weights of ``kind``; the right side is an independent central finite
    difference of ``F.evaluate``.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    kind = InnerProductKind.parse(kind)
    state = np.asarray(state, dtype=float)
    grad = F.gradient(state, kind)
    w = _broadcast_weights(F.weights(state, kind).weights, state.shape)
    if not (np.all(np.isfinite(grad)) and np.all(np.isfinite(w))):
        raise FloatingPointError("non-finite gradient or weights")
    scale = float(np.max(np.abs(state))) or 1.0
    step = FD_RELATIVE_STEP * scale
    rng = np.random.default_rng(seed)
    report = GradientCheckReport(kind, tolerance)
    for trial in range(trials):
        eta = directions[trial] if directions is not None else smooth_direction(state.shape, rng, F.layout)
        lhs = float(np.sum(grad * eta * w))
        rhs = fd_directional_derivative(F, state, eta, step)
        report.rows.append((trial, lhs, rhs, relative_error(lhs, rhs)))
    log.debug("gradient check %s: max rel error %.3e", kind.value, report.max_rel_error)
    return report
