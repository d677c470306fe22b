"""Numerical experiments for spacelike graphs in Lorentzian warped products."""

__version__ = "0.1.0"

from .errors import (
    CapacityError,
    CausalityError,
    ConditioningError,
    ConfigError,
    DomainError,
    HypothesisError,
    WarpLabError,
)
from .warp import WarpSpec, check_tcc, eval_warp, slice_mean_curvature, slice_shape_scalar
from .fiber import DiscreteFiber, build_fiber, divergence, geodesic_ball, gradient, laplace_beltrami, volume_growth

