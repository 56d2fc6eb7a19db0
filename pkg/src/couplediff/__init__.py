"""Coupled edge-aware diffusion on rectangular grids.

u_t = div(g(v) grad u),  v_t - lam Lap v = (1 - lam)(|grad u| - v)

with homogeneous Dirichlet data, a semi-implicit solver, and numerical
checks of the energy, Phi and dissipative inequalities.
"""
from .grid import GridSpec, ScalarField, l2_norm, h1_seminorm, v2_norm
from .model import ConstantDiffusivity, DiffusivityParams, LambdaField, ModelConfig, ValidationError, validate_config
from .operators import div_g_grad, gradient_magnitude, laplacian, operator_A
from .solver import NumericalError, SolverConfig, State, Trajectory, run, solve_linear, step

__version__ = "0.1.0"

__all__ = [
    "GridSpec", "ScalarField", "l2_norm", "h1_seminorm", "v2_norm",
    "ConstantDiffusivity", "DiffusivityParams", "LambdaField", "ModelConfig", "ValidationError", "validate_config",
    "div_g_grad", "gradient_magnitude", "laplacian", "operator_A",
    "NumericalError", "SolverConfig", "State", "Trajectory", "run", "solve_linear", "step",
]
