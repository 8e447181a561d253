import numpy as np
import pytest

from optext import ModelParams, QuadratureSpec, Solution

# Reference parameter sets used throughout: a drifted-Brownian instance and
# its mean-reverting counterpart (identical except for b).
BM_PARAMS = ModelParams(a=0.4, b=0.0, sigma=0.8, rho=0.375, c=0.3, alpha=0.25)
OU_PARAMS = ModelParams(a=0.4, b=1.0, sigma=0.8, rho=0.375, c=0.3, alpha=0.25)

# Golden values from a 30-digit quadrature + interval-bisection oracle,
# computed independently before the implementation (mpmath, dps=30).
GOLD = {
    "gamma_0375": 2.370436184416600908646474,
    "x0": 1.0093497807717958,
    "x_inf": 0.7449264049206806,
    "x_bar": 0.5125 / 1.375,
    "psi_05": (
        1.267339166528104179097,
        0.9488975858134859640798,
        1.781693581342017116681,
        4.634073558211702850868,
    ),
    "F_mid": 1.83495322317422,       # at x_inf + 0.5 (x0 - x_inf)
    "F_near": 25.6596527117169,      # at x_inf + 1e-3 (x0 - x_inf)
    "kappa": 3.99246575864246,
    "psi_at_mean_closed": 1.1806424908875368,  # 2^(s/2-1) G(s/2)/G(s), s=3/8
}


@pytest.fixture(scope="session")
def bm_solution():
    return Solution.build(BM_PARAMS)


@pytest.fixture(scope="session")
def ou_solution():
    return Solution.build(OU_PARAMS)


@pytest.fixture(scope="session")
def quad_spec():
    return QuadratureSpec()


def sample_region_states(sol, region_name, n, seed):
    """Random states in one classified region, rejection-sampled."""
    rng = np.random.default_rng(seed)
    if sol.branch == "ou":
        x_ref, lo = sol.prices.x0, sol.prices.x_inf - 2.0
        y_hi = min(0.9 * sol.table.f_max, 20.0)
    else:
        x_ref, lo = sol.prices.x_star, sol.prices.x_star - 2.5
        y_hi = 20.0
    alpha = sol.params.alpha
    out = []
    while len(out) < n:
        y = float(np.exp(rng.uniform(np.log(1e-3), np.log(y_hi))))
        thr = sol.threshold(y)
        if region_name == "waiting":
            x = float(rng.uniform(lo, thr - 1e-9))
        elif region_name == "sell1":
            x = float(rng.uniform(x_ref + 1e-6, x_ref + 3.0))
            y = float(rng.uniform(1e-6, (x - x_ref) / alpha))
        else:  # sell2
            hi = min(x_ref + alpha * y * 0.999, thr + 3.0)
            if hi <= thr:
                continue
            x = float(rng.uniform(thr + 1e-12, hi))
        region = sol.region(x, y)
        if region.value == region_name:
            out.append((x, y))
    return out
