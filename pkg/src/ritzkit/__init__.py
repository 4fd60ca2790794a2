"""Deep Ritz training of ReLU networks, exact CPWL constructions and Kuhn interpolation."""

from .autodiff import NumericError, grad_params, value_and_grad
from .cases import ManufacturedCase, get_case, manufactured_registry
from .energy import EnergySpec, estimate_interior, estimate_on_batches, estimate_penalty, estimate_total
from .estimator import DeepRitzRegressor
from .geometry import Ball, Hypercube, Interval, sample_boundary, sample_interior
from .net import NetworkParams, architecture, default_depth, forward, init, input_gradient, widen
from .pwl import Breakpoints1D, CpwlInterpolant, kuhn_interpolant, pwl_to_network_1d, relu_max, relu_min, sobolev_error
from .solve import LadderConfig, OptimizerConfig, Rung, RungReport, TrainingDiverged, gamma_ladder, train

__version__ = "0.1.0"

__all__ = [
    "Ball", "Breakpoints1D", "CpwlInterpolant", "DeepRitzRegressor", "EnergySpec", "Hypercube", "Interval",
    "LadderConfig", "ManufacturedCase", "NetworkParams", "NumericError", "OptimizerConfig", "Rung", "RungReport",
    "TrainingDiverged", "architecture", "default_depth", "estimate_interior", "estimate_on_batches",
    "estimate_penalty", "estimate_total", "forward", "gamma_ladder", "get_case", "grad_params", "init",
    "input_gradient", "kuhn_interpolant", "manufactured_registry", "pwl_to_network_1d", "relu_max", "relu_min",
    "sample_boundary", "sample_interior", "sobolev_error", "train", "value_and_grad", "widen",
]
