"""Fitting procedures that turn measurements into model parameters."""

from .movidius import fit_movidius
from .power import (
    Derivation,
    derive_static_active_dynamic,
    fit_cpu_coeffs_closed,
    fit_cpu_coeffs_full,
    fit_rho,
    fit_rho_shared,
    fit_uncore,
)
from .report import FitReport
from .simplex import SimplexConfig, SimplexResult, nelder_mead
from .throughput import (
    ThroughputSample,
    fit_cas_cost,
    fit_cw_pair,
    fit_high_contention_line,
    fit_lambda,
    measurement_budget,
)

__all__ = [
    "Derivation",
    "FitReport",
    "SimplexConfig",
    "SimplexResult",
    "ThroughputSample",
    "derive_static_active_dynamic",
    "fit_cas_cost",
    "fit_cpu_coeffs_closed",
    "fit_cpu_coeffs_full",
    "fit_cw_pair",
    "fit_high_contention_line",
    "fit_lambda",
    "fit_movidius",
    "fit_rho",
    "fit_rho_shared",
    "fit_uncore",
    "measurement_budget",
    "nelder_mead",
]
