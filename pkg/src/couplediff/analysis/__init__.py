"""Numerical checks of the energy and dissipative inequalities."""
from .pairs import TestPair, eigenmode_pair, trajectory_pair, zero_pair
from .residuals import residual_E1, residual_E2
from .dissipative import DissipativeReport, check_dissipative, default_gamma_grid, fit_minimal_gamma
from .inequalities import (
    GronwallData,
    GronwallResult,
    gronwall_check,
    ladyzhenskaya_check,
    sobolev_constant_estimate,
)
from .studies import (
    convergence_study,
    epsilon_limit_study,
    restrict_trajectory,
    self_consistency_study,
)

__all__ = [
    "TestPair", "eigenmode_pair", "trajectory_pair", "zero_pair",
    "residual_E1", "residual_E2",
    "DissipativeReport", "check_dissipative", "default_gamma_grid", "fit_minimal_gamma",
    "GronwallData", "GronwallResult", "gronwall_check", "ladyzhenskaya_check", "sobolev_constant_estimate",
    "convergence_study", "epsilon_limit_study", "restrict_trajectory", "self_consistency_study",
]
