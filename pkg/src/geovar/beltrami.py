"""Polyakov action of an image graph and the Beltrami flow.

An image with channels ``I^k`` is embedded as ``(x, y, beta I^1, ...)`` in a
flat space.  The induced metric is ``G = Id + beta^2 sum_k grad I^k grad I^k^T``
and the flow evolves only the intensity channels.

Sign and factor convention: with the metric frozen, the action is a
quadratic form in each channel whose exact variation is
``-2 beta^2 hx hy div*(sqrt(g) G^-1 grad I)``, where ``div*`` is the
negative transpose of the central gradient.  Divided by the area weights
``sqrt(g) hx hy`` this is ``-2 beta^2`` times :func:`beltrami_operator`,
so the flow ``I_t = beltrami_operator(I)`` is the surface-weighted descent
up to the constant time rescaling ``2 beta^2``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .grid import ScalarField, central_adjoint_div, grad_arrays
from .trace import EvolutionTrace
from .variation import DiscreteFunctional, InnerProductKind, MetricWeights, metric_weights

log = logging.getLogger(__name__)

STABILITY = 0.2
MAX_BACKTRACK = 30


@dataclass(frozen=True, eq=False)
class EmbeddingMap:
    channels: tuple[ScalarField, ...]
    beta: float = 1.0

    def __post_init__(self):
        chans = tuple(self.channels) if not isinstance(self.channels, ScalarField) else (self.channels,)
        if not chans:
            raise ValueError("an embedding needs at least one intensity channel")
        if any(c.spec != chans[0].spec for c in chans):
            raise ValueError("all channels must share one grid")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        object.__setattr__(self, "channels", chans)

    @property
    def spec(self):
        return self.channels[0].spec

    def stack(self) -> np.ndarray:
        return np.stack([c.values for c in self.channels])

    def with_stack(self, values: np.ndarray) -> "EmbeddingMap":
        return EmbeddingMap(tuple(ScalarField(self.spec, v) for v in values), self.beta)


@dataclass(frozen=True, eq=False)
class InducedMetric:
    g11: ScalarField
    g12: ScalarField
    g22: ScalarField
    det_g: ScalarField

    def inverse(self):
        d = self.det_g.values
        return self.g22.values / d, -self.g12.values / d, self.g11.values / d


def _metric_arrays(stack: np.ndarray, beta: float, hx: float, hy: float):
    g11 = np.ones(stack.shape[1:])
    g12 = np.zeros(stack.shape[1:])
    g22 = np.ones(stack.shape[1:])
    for ch in stack:
        gx, gy = grad_arrays(ch, hx, hy)
        g11 += beta ** 2 * gx * gx
        g12 += beta ** 2 * gx * gy
        g22 += beta ** 2 * gy * gy
    return g11, g12, g22, g11 * g22 - g12 * g12


def induced_metric(e: EmbeddingMap) -> InducedMetric:
    s = e.spec
    g11, g12, g22, det = _metric_arrays(e.stack(), e.beta, s.hx, s.hy)
    f = lambda a: ScalarField(s, a)  # noqa: E731
    return InducedMetric(f(g11), f(g12), f(g22), f(det))


def identity_metric(spec) -> InducedMetric:
    one, zero = ScalarField.constant(spec, 1.0), ScalarField.constant(spec, 0.0)
    return InducedMetric(one, zero, one, one)


def _action(stack, beta, m: InducedMetric, hx, hy) -> float:
    d = m.det_g.values
    if np.any(d <= 0):
        raise ValueError("metric determinant must be positive")
    i11, i12, i22 = m.inverse()
    # the two spatial coordinates have gradients (1, 0) and (0, 1)
    density = i11 + i22
    for ch in stack:
        gx, gy = grad_arrays(ch, hx, hy)
        density = density + beta ** 2 * (i11 * gx * gx + 2 * i12 * gx * gy + i22 * gy * gy)
    return float(np.sum(np.sqrt(d) * density) * hx * hy)


def polyakov_action(e: EmbeddingMap, m: InducedMetric | None = None) -> float:
    """Discrete Polyakov action; ``m`` defaults to the induced metric."""
    m = m if m is not None else induced_metric(e)
    s = e.spec
    return _action(e.stack(), e.beta, m, s.hx, s.hy)


def _operator(ch, m: InducedMetric, hx, hy):
    sg = np.sqrt(m.det_g.values)
    i11, i12, i22 = m.inverse()
    gx, gy = grad_arrays(ch, hx, hy)
    return central_adjoint_div(sg * (i11 * gx + i12 * gy), sg * (i12 * gx + i22 * gy), hx, hy) / sg


def beltrami_operator(e: EmbeddingMap, m: InducedMetric | None = None, channel: int = 0) -> ScalarField:
    """``(1/sqrt g) div(sqrt g G^-1 grad I)`` for one intensity channel."""
    m = m if m is not None else induced_metric(e)
    s = e.spec
    return ScalarField(s, _operator(e.channels[channel].values, m, s.hx, s.hy))


class PolyakovFunctional(DiscreteFunctional):
    """Polyakov action with a frozen metric, as a function of channel values.

    ``state`` has shape ``(ny, nx)`` for one channel or ``(k, ny, nx)``.
    """

    def __init__(self, metric: InducedMetric, beta: float):
        self.metric = metric
        self.beta = beta
        self.spec = metric.det_g.spec

    def _stack(self, state):
        state = np.asarray(state, dtype=float)
        return state[None] if state.ndim == 2 else state

    def evaluate(self, state):
        return _action(self._stack(state), self.beta, self.metric, self.spec.hx, self.spec.hy)

    def raw_variation(self, state):
        s = self.spec
        stack = self._stack(state)
        sg = np.sqrt(self.metric.det_g.values)
        raw = np.stack([-2 * self.beta ** 2 * s.cell_area * sg * _operator(ch, self.metric, s.hx, s.hy)
                        for ch in stack])
        return raw.reshape(np.shape(state))

    def weights(self, state, kind) -> MetricWeights:
        kind = InnerProductKind.parse(kind)
        if kind is InnerProductKind.GEOMETRIC_SURFACE:
            return metric_weights(None, kind, det_g=self.metric.det_g)
        if kind is InnerProductKind.PARAMETER_L2:
            return metric_weights(np.ones(self.spec.shape), kind)
        raise ValueError(f"the Polyakov action uses surface inner products, not {kind.value}")


def evolve_beltrami(e: EmbeddingMap, dt: float, steps: int, refreeze_every: int = 1,
                    trace: bool = True) -> tuple[EmbeddingMap, EvolutionTrace]:
    """Explicit Euler ``I <- I + dt * beltrami_operator(I)`` on every channel.

    All channels share one metric, recomputed every ``refreeze_every`` steps.
    ``dt`` is clamped to ``0.2 min(hx, hy)^2`` and halved while a step would
    raise the action (evaluated with the induced metric of the new state).
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if steps < 1:
        raise ValueError("steps must be at least 1")
    if refreeze_every < 1:
        raise ValueError("refreeze_every must be at least 1")
    s = e.spec
    dt = min(dt, STABILITY * min(s.hx, s.hy) ** 2)
    stack = e.stack()
    out = EvolutionTrace()

    def metric_of(stack):
        return InducedMetric(*(ScalarField(s, a) for a in _metric_arrays(stack, e.beta, s.hx, s.hy)))

    def velocity(stack, metric):
        return np.stack([_operator(ch, metric, s.hx, s.hy) for ch in stack])

    metric = metric_of(stack)
    energy = _action(stack, e.beta, metric, s.hx, s.hy)
    t = 0.0
    if trace:
        out.record(0, t, energy, float(np.max(np.abs(velocity(stack, metric)))))
    for step in range(1, steps + 1):
        if (step - 1) % refreeze_every == 0:
            metric = metric_of(stack)
        vel = velocity(stack, metric)
        if not np.all(np.isfinite(vel)):
            out.finish("non-finite", step)
            log.warning("non-finite Beltrami velocity at step %d", step)
            return e.with_stack(stack), out
        dt_try = dt
        for _ in range(MAX_BACKTRACK):
            cand = stack + dt_try * vel
            if np.all(np.isfinite(cand)):
                e_new = _action(cand, e.beta, metric_of(cand), s.hx, s.hy)
                if e_new <= energy:
                    break
            dt_try *= 0.5
        else:
            out.finish("stalled", step - 1)
            return e.with_stack(stack), out
        stack, energy, t = cand, e_new, t + dt_try
        if trace:
            out.record(step, t, energy, float(np.max(np.abs(vel))), dt=dt_try)
    out.finish("completed", steps)
    return e.with_stack(stack), out
