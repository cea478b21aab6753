"""Ruin probabilities in the classical compound-Poisson risk model.

Solvers for the governing Volterra integro-differential equation: a
one-step RK4 scheme with composite Simpson history quadrature, two-step
Runge-Kutta schemes (linear-ODE form for Gamma(2, beta) claims, truncated
Gauss history-local form for Pareto claims), closed-form references for
exponential and Gamma(2, beta) claims, and a Monte Carlo cross-check.
"""

from .errors import (
    CoefficientFileError,
    DegenerateIntervalError,
    DerivationError,
    DivergedError,
    RuinModelError,
    StepFailureError,
    UnsupportedModelError,
)
from .exact import Gamma2ExactSolution, exact_exponential, exact_gamma2, gamma2_exact_solution
from .model import (
    ClaimDistribution,
    Exponential,
    Gamma2,
    ModelParams,
    ParetoLomax,
    SolutionPath,
    psi_at_zero,
)
from .montecarlo import McEstimate, simulate_ruin, simulate_until_stable
from .quadrature import (
    GaussRule,
    MomentVector,
    gauss_jacobi_improper,
    gauss_legendre_01,
    pareto_moments,
    pareto_truncated_gauss,
    simpson13_history,
    simpson13_weights,
)
from .rk4 import (
    GammaHistoryState,
    Rk4Stages,
    gamma_history_state,
    rk4_stages_gamma2,
    rk4_stages_generic,
    rk4_step_gamma2,
    rk4_step_generic,
    rk4_step_pareto,
    solve_rk4,
)
from .tsrk import (
    LinearOdeSystem,
    TSRKCoefficients,
    TsrkStepState,
    coefficient_residuals,
    cubic_interpolate,
    derive_tsrk4_coefficients,
    gamma2_ode_system,
    load_m2_coefficients,
    solve_tsrk,
    tsrk4_improper_step,
    tsrk4_phl_step,
    tsrk_bootstrap_ode,
    tsrk_bootstrap_pareto,
    tsrk_ode_step,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
