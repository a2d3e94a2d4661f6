"""Kinetic model of an exploding cloud: grids, kernels, Picard solver,
Monte Carlo cross-check and asymptotic analysis."""

__version__ = "0.1.0"

from .analysis import (asymptotic_bound_check, asymptotic_table, free_motion_limit, mass_trace,
                       shipped_test_functions, weak_residual)
from .errors import (ConfigError, FireworksError, ModelEvaluationError, NonConvergenceError,
                     NumericalBlowupError, ValidityError)
from .kernels import (KernelFamily, KernelSet, check_admissibility, estimate_delta, eval_kernels,
                      family, sample_kernels)
from .montecarlo import init_ensemble, run_ensemble, step_ensemble, tally
from .phase_space import (DistributionField, PhaseSpaceGrid, free_stream, quadrature,
                          restrict_to_characteristics, stream_history)
from .solver import (apply_J, apply_J_plus, duhamel_consistency, local_contraction_check,
                     picard_solve, weighted_norm)

__all__ = [
    "PhaseSpaceGrid", "DistributionField", "quadrature", "free_stream", "stream_history",
    "restrict_to_characteristics", "KernelFamily", "KernelSet", "family", "eval_kernels",
    "sample_kernels", "check_admissibility", "estimate_delta", "apply_J", "apply_J_plus",
    "weighted_norm", "picard_solve", "local_contraction_check", "duhamel_consistency",
    "init_ensemble", "step_ensemble", "tally", "run_ensemble", "mass_trace", "free_motion_limit",
    "asymptotic_bound_check", "asymptotic_table", "weak_residual", "shipped_test_functions",
    "FireworksError", "ConfigError", "ModelEvaluationError", "NumericalBlowupError",
    "NonConvergenceError", "ValidityError",
]
