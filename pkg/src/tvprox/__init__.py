"""Total-variation proximal operators with analytic backward passes."""
from .estimators import TVDenoiser1D, TVImageFilter
from .grad1d import (
    SegmentPartition,
    jacobian_x_explicit,
    segments,
    vjp_lambda,
    vjp_lambda_batch,
    vjp_x,
    vjp_x_batch,
)
from .layer import TVLayer, layer_backward, layer_forward, softplus
from .prox1d import (
    NewtonOptions,
    SolveStats,
    duality_gap,
    prox_tv1d,
    prox_tv1d_batch,
    prox_tv1d_newton,
    prox_tv1d_tautstring,
)
from .prox2d import objective_2d, prox_tv2d_dykstra, prox_tv2d_vjp
from .tvcore import LayerParams, TVError, validate

__version__ = "0.1.0"

__all__ = [
    "LayerParams",
    "NewtonOptions",
    "SegmentPartition",
    "SolveStats",
    "TVDenoiser1D",
    "TVError",
    "TVImageFilter",
    "TVLayer",
    "duality_gap",
    "jacobian_x_explicit",
    "layer_backward",
    "layer_forward",
    "objective_2d",
    "prox_tv1d",
    "prox_tv1d_batch",
    "prox_tv1d_newton",
    "prox_tv1d_tautstring",
    "prox_tv2d_dykstra",
    "prox_tv2d_vjp",
    "segments",
    "softplus",
    "validate",
    "vjp_lambda",
    "vjp_lambda_batch",
    "vjp_x",
    "vjp_x_batch",
]
