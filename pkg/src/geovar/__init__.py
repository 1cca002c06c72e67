"""Geometric variational flows on images: geodesic active contours, Beltrami flow
and Chan-Vese segmentation, each with a gradient checker for its inner product."""

from .beltrami import (EmbeddingMap, InducedMetric, PolyakovFunctional, beltrami_operator,
                       evolve_beltrami, induced_metric, polyakov_action)
from .chanvese import (ChanVeseFunctional, CvParams, LevelSetState, RegionStats, cv_energy,
                       cv_velocity, evolve_cv, region_means)
from .curve import ClosedCurve, CurveGeometry, geometry, length, reparameterize, resample
from .gac import (EdgeIndicatorParams, GacFunctional, GacState, edge_indicator, evolve_gac,
                  gac_energy, gac_velocity)
from .grid import GridSpec, ScalarField, VectorField, divergence, gaussian_smooth, gradient
from .levelset import heaviside_delta, reinitialize
from .trace import EvolutionTrace, TraceRow
from .variation import DiscreteFunctional, InnerProductKind, check_gradient

__version__ = "0.1.0"
