"""Optimal extraction of an exhaustible commodity under linear price impact.

A price-making extractor sells from a finite reserve into a spot market
whose unaffected price is either a drifted Brownian motion or a
mean-reverting diffusion; every unit sold knocks the price down by alpha.
The package solves the resulting singular control problem in closed /
semi-closed form (critical prices, free boundary, value function), and
verifies the solution three independent ways: variational-inequality
residuals, Monte Carlo simulation of the reflected policy, and a
finite-difference grid solver.

Typical use:

    from optext import ModelParams, Solution
    p = ModelParams(a=0.4, b=1.0, sigma=0.8, rho=0.375, c=0.3, alpha=0.25)
    sol = Solution.build(p)
    sol.prices.x0, sol.prices.x_inf      # critical prices
    sol.table.F(0.9), sol.threshold(1.0) # free boundary and its inverse
    sol.value_point(0.5, 1.0)            # value and partial derivatives
"""

from .boundary import (
    BoundaryTable,
    CriticalPrices,
    Region,
    boundary_integrand,
    build_table,
    classify,
    critical_prices,
    find_x0,
    find_x_inf,
    solve_z,
    x_bar,
    x_star_bm,
)
from .errors import ConfigError, DomainError, NumericsError
from .qvi import GridSpec, QviReport, QviResult, compare, default_grid, solve_qvi
from .sim import (
    DominanceReport,
    Policy,
    SimConfig,
    SimResult,
    dominance_test,
    initial_jump,
    running_max_policy_bm,
    simulate_payoff,
    simulate_payoff_many,
    simulate_stopping_payoff,
)
from .specfun import (
    ModelParams,
    PsiEval,
    QuadratureSpec,
    bm_exponent,
    gamma,
    psi_bm,
    psi_eval,
    psi_k,
    psi_partial_a,
    psi_partial_sigma,
)
from .value import (
    HJBReport,
    Solution,
    ValuePoint,
    chi_diagnostic,
    coeff_A,
    coeff_A_prime,
    growth_constant,
    hjb_residuals,
    stopping_hjb_residuals,
    stopping_value,
    value_bm,
    value_ou,
)

__version__ = "0.1.0"

__all__ = [
    "BoundaryTable",
    "ConfigError",
    "CriticalPrices",
    "DomainError",
    "DominanceReport",
    "GridSpec",
    "HJBReport",
    "ModelParams",
    "NumericsError",
    "Policy",
    "PsiEval",
    "QuadratureSpec",
    "QviReport",
    "QviResult",
    "Region",
    "SimConfig",
    "SimResult",
    "Solution",
    "ValuePoint",
    "bm_exponent",
    "boundary_integrand",
    "build_table",
    "chi_diagnostic",
    "classify",
    "coeff_A",
    "coeff_A_prime",
    "compare",
    "critical_prices",
    "default_grid",
    "dominance_test",
    "find_x0",
    "find_x_inf",
    "gamma",
    "growth_constant",
    "hjb_residuals",
    "initial_jump",
    "psi_bm",
    "psi_eval",
    "psi_k",
    "psi_partial_a",
    "psi_partial_sigma",
    "running_max_policy_bm",
    "simulate_payoff",
    "simulate_payoff_many",
    "simulate_stopping_payoff",
    "solve_qvi",
    "solve_z",
    "stopping_hjb_residuals",
    "stopping_value",
    "value_bm",
    "value_ou",
    "x_bar",
    "x_star_bm",
]
