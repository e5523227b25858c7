"""Optimal-control shuttling of a single electron across three-site su(3) systems."""

from .optimizer import OptimizationResult, OptimizerConfig, optimize
from .propagator import PiecewiseControls, fidelity, propagate
from .systems import SystemModel, donor_chain_model, model_from_parameters, triple_dot_model

__all__ = [
    "OptimizationResult",
    "OptimizerConfig",
    "PiecewiseControls",
    "SystemModel",
    "donor_chain_model",
    "fidelity",
    "model_from_parameters",
    "optimize",
    "propagate",
    "triple_dot_model",
]
