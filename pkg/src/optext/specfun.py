"""Increasing fundamental solution of the price generator, and friends.

For a mean-reverting price with drift a - b*x (b > 0), volatility sigma and
discount rate rho, the strictly increasing positive solution psi of

    (sigma^2/2) u'' + (a - b x) u' - rho u = 0

and its derivatives admit the integral representation

    psi^(k)(x) = (sqrt(2b)/sigma)^k / Gamma(rho/b)
                 * integral_0^inf t^(rho/b + k - 1) exp(-t^2/2 + t*theta(x)) dt

with theta(x) = sqrt(2b) (b x - a) / (sigma b).  Each derivative order solves
the same ODE with rho replaced by rho + k b.  This module evaluates orders
0..3 of that integral by adaptive quadrature, with the endpoint singularity
(rho/b + k < 1) removed by a power substitution and the upper tail truncated
once the integrand is negligible against the running sum.

When b = 0 the increasing solution is a plain exponential exp(n x); see
`psi_bm` / `bm_exponent`.

All evaluators are pure functions of their arguments and safe to call
concurrently.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from .errors import DomainError, NumericsError

__all__ = [
    "ModelParams",
    "QuadratureSpec",
    "PsiEval",
    "gamma",
    "psi_eval",
    "psi_k",
    "psi_bm",
    "bm_exponent",
    "psi_partial_a",
    "psi_partial_sigma",
]

# Orders above 3 never occur: the free-boundary integrand needs psi''' and
# nothing higher.
MAX_ORDER = 3

# Above this theta the direct integrand exp(-t^2/2 + theta*t) would overflow
# doubles; switch to the shifted (log-scaled) form.
_THETA_SHIFT = 30.0


@dataclass(frozen=True)
class ModelParams:
    """Market constants defining a problem instance.

    a      drift level (price/time); a/b is the long-run mean when b > 0
    b      mean-reversion speed (1/time), >= 0; b == 0 selects the
           drifted-Brownian branch, b > 0 the mean-reverting branch
    sigma  volatility (price/sqrt(time)), > 0
    rho    discount rate (1/time), > 0
    c      marginal extraction cost (price), > 0
    alpha  marginal price impact per unit extracted (price/unit), > 0
    """

    a: float
    b: float
    sigma: float
    rho: float
    c: float
    alpha: float

    def __post_init__(self):
        for name in ("a", "b", "sigma", "rho", "c", "alpha"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise DomainError(f"ModelParams.{name} must be finite, got {v!r}")
        if self.sigma <= 0:
            raise DomainError("sigma must be > 0")
        if self.rho <= 0:
            raise DomainError("rho must be > 0")
        if self.c <= 0:
            raise DomainError("c must be > 0")
        if self.alpha <= 0:
            raise DomainError("alpha must be > 0")
        if self.b < 0:
            raise DomainError("b must be >= 0")

    @property
    def mean_reverting(self) -> bool:
        return self.b > 0

    def theta(self, x: float) -> float:
        """Standardised distance from the long-run mean (b > 0 only)."""
        return math.sqrt(2.0 * self.b) * (self.b * x - self.a) / (self.sigma * self.b)


@dataclass(frozen=True)
class QuadratureSpec:
    """Accuracy controls for the psi quadrature.

    rel_tol           target relative error per order
    abs_tol           relative floor used when truncating the upper tail
    max_subdivisions  adaptive subdivision budget per piece
    split_point       interior breakpoint separating the (possibly singular)
                      head [0, split] from the Gaussian tail
    """

    rel_tol: float = 1e-10
    abs_tol: float = 1e-16
    max_subdivisions: int = 200
    split_point: float = 1.0

    def __post_init__(self):
        if self.rel_tol <= 0:
            raise DomainError("rel_tol must be > 0")
        if self.max_subdivisions < 8:
            raise DomainError("max_subdivisions must be >= 8")
        if self.split_point <= 0:
            raise DomainError("split_point must be > 0")


@dataclass(frozen=True)
class PsiEval:
    """psi and its first three derivatives at one price point.

    `values[k] * exp(log_shift)` is psi^(k)(x); log_shift is nonzero only for
    far-right evaluation points where the plain value would overflow, and is
    shared across orders so ratios of entries are always safe.  `err_est[k]`
    is an absolute error estimate on `values[k]` (same scaling).
    """

    x: float
    values: np.ndarray
    err_est: np.ndarray
    log_shift: float = 0.0

    def value(self, k: int) -> float:
        if self.log_shift == 0.0:
            return float(self.values[k])
        return float(self.values[k]) * math.exp(self.log_shift)

    def ratio(self, j: int, k: int) -> float:
        """psi^(j)(x) / psi^(k)(x), stable under the shared log shift."""
        return float(self.values[j] / self.values[k])


# Lanczos approximation, g = 7, 9 coefficients: a fixed-coefficient rational
# approximation accurate to ~15 significant digits for real positive
# arguments.
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def gamma(s: float) -> float:
    """Euler Gamma function for s > 0 (Lanczos fixed-coefficient form)."""
    if not (s > 0) or not math.isfinite(s):
        raise DomainError(f"gamma requires s > 0, got {s!r}")
    if s < 0.5:
        # reflection keeps the Lanczos sum in its accurate range
        return math.pi / (math.sin(math.pi * s) * gamma(1.0 - s))
    z = s - 1.0
    acc = _LANCZOS_COEF[0]
    for i, ci in enumerate(_LANCZOS_COEF[1:], start=1):
        acc += ci / (z + i)
    t = z + _LANCZOS_G + 0.5
    return math.sqrt(2.0 * math.pi) * t ** (z + 0.5) * math.exp(-t) * acc


def _quad_piece(f, lo, hi, spec: QuadratureSpec, scale_hint: float):
    with warnings.catch_warnings():
        # convergence is policed by the explicit error gate in the caller
        warnings.simplefilter("ignore", IntegrationWarning)
        val, err = quad(
            f,
            lo,
            hi,
            epsabs=spec.abs_tol * max(scale_hint, 1e-300),
            epsrel=0.1 * spec.rel_tol,
            limit=spec.max_subdivisions,
        )
    return val, err


def _moment_integral(m: float, theta: float, spec: QuadratureSpec):
    """integral_0^inf t^(m-1) exp(-t^2/2 + theta t) dt, with error estimate.

    Returns (value, err, log_shift).  For theta > _THETA_SHIFT the result is
    value * exp(log_shift) with log_shift = theta^2/2.
    """
    if theta > _THETA_SHIFT:
        # Shift the Gaussian peak out: t^(m-1) e^{-t^2/2+theta t}
        #   = e^{theta^2/2} t^(m-1) e^{-(t-theta)^2/2}
        lo = max(0.0, theta - 40.0)
        hi = theta + 40.0

        def f_shift(t):
            return t ** (m - 1.0) * math.exp(-0.5 * (t - theta) ** 2)

        scale = theta ** (m - 1.0) * 2.5
        val, err = _quad_piece(f_shift, lo, hi, spec, scale)
        return val, err, 0.5 * theta * theta

    split = spec.split_point

    def f(t):
        return t ** (m - 1.0) * math.exp(theta * t - 0.5 * t * t)

    # Head [0, split]: for m < 1 substitute t = u^(1/m), which absorbs the
    # algebraic endpoint singularity exactly (t^(m-1) dt = du / m).
    if m < 1.0:
        inv_m = 1.0 / m

        def f_head(u):
            t = u ** inv_m
            return math.exp(theta * t - 0.5 * t * t) * inv_m

        head, err_head = _quad_piece(f_head, 0.0, split ** m, spec, 1.0)
    else:
        head, err_head = _quad_piece(f, 0.0, split, spec, 1.0)

    # Tail [split, T]: extend T until the Gaussian-decay bound on the
    # remainder is negligible relative to the running sum.
    total = head
    err = err_head
    t_lo = split
    t_hi = max(theta, 0.0) + 10.0
    for _ in range(60):
        if t_hi <= t_lo:
            t_hi = t_lo + 10.0
        chunk, err_chunk = _quad_piece(f, t_lo, t_hi, spec, abs(total))
        total += chunk
        err += err_chunk
        decay = t_hi - theta - max(m - 1.0, 0.0) / t_hi
        tail_bound = f(t_hi) / max(decay, 0.5)
        if tail_bound <= spec.abs_tol * abs(total) + 1e-300:
            err += tail_bound
            break
        t_lo, t_hi = t_hi, t_hi + 10.0
    else:
        raise NumericsError(
            f"tail truncation did not converge (m={m}, theta={theta})",
            partial=total,
        )
    return total, err, 0.0


def _psi_eval_impl(x: float, p: ModelParams, spec: QuadratureSpec) -> PsiEval:
    s = p.rho / p.b
    theta = p.theta(x)
    pref = math.sqrt(2.0 * p.b) / p.sigma
    g = gamma(s)
    values = np.empty(4)
    errs = np.empty(4)
    shift = 0.0
    for k in range(MAX_ORDER + 1):
        val, err, shift = _moment_integral(s + k, theta, spec)
        scale = pref**k / g
        values[k] = val * scale
        errs[k] = err * scale
        if values[k] <= 0.0:
            raise NumericsError(
                f"psi^({k})({x}) evaluated non-positive", partial=values[k]
            )
        if err > 50.0 * spec.rel_tol * val:
            raise NumericsError(
                f"psi^({k})({x}) quadrature error {err:.3e} exceeds target "
                f"for value {val:.6e}",
                partial=values[k],
            )
    return PsiEval(x=x, values=values, err_est=errs, log_shift=shift)


@lru_cache(maxsize=262144)
def _psi_eval_cached(x, p, spec):
    return _psi_eval_impl(x, p, spec)


def psi_eval(x: float, p: ModelParams, spec: QuadratureSpec | None = None) -> PsiEval:
    """Evaluate psi^(0..3) at x for a mean-reverting instance (b > 0)."""
    if not p.mean_reverting:
        raise DomainError("psi_eval requires b > 0; use psi_bm for b == 0")
    if spec is None:
        spec = QuadratureSpec()
    return _psi_eval_cached(float(x), p, spec)


def psi_k(
    x: float, k: int, p: ModelParams, spec: QuadratureSpec | None = None
) -> float:
    """psi^(k)(x) as a plain positive float, k in 0..3."""
    if not 0 <= k <= MAX_ORDER:
        raise DomainError(f"derivative order must be in 0..{MAX_ORDER}, got {k}")
    ev = psi_eval(x, p, spec)
    if ev.log_shift > 690.0:
        raise NumericsError(
            f"psi^({k})({x}) overflows a double; use psi_eval for the "
            "log-scaled form",
            partial=ev.values[k],
        )
    return ev.value(k)


def bm_exponent(p: ModelParams) -> float:
    """Positive root n of (sigma^2/2) n^2 + a n - rho = 0 (b == 0 branch)."""
    if p.mean_reverting:
        raise DomainError("bm_exponent requires b == 0")
    r = p.a / p.sigma**2
    return -r + math.sqrt(r * r + 2.0 * p.rho / p.sigma**2)


def psi_bm(x: float, p: ModelParams) -> float:
    """Increasing fundamental solution exp(n x) for the b == 0 branch."""
    return math.exp(bm_exponent(p) * x)


def psi_partial_a(
    x: float, k: int, p: ModelParams, spec: QuadratureSpec | None = None
) -> float:
    """d psi^(k)/da = -psi^(k+1)/b, via dominated convergence."""
    if not 0 <= k <= MAX_ORDER - 1:
        raise DomainError("psi_partial_a supports k in 0..2")
    return -psi_k(x, k + 1, p, spec) / p.b


def psi_partial_sigma(
    x: float, k: int, p: ModelParams, spec: QuadratureSpec | None = None
) -> float:
    """d psi^(k)/dsigma = ((a-bx)/(b sigma)) psi^(k+1) - (k/sigma) psi^(k)."""
    if not 0 <= k <= MAX_ORDER - 1:
        raise DomainError("psi_partial_sigma supports k in 0..2")
    ev = psi_eval(x, p, spec)
    lead = (p.a - p.b * x) / (p.b * p.sigma) * ev.value(k + 1)
    return lead - k / p.sigma * ev.value(k)
