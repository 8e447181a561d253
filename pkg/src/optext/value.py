"""Candidate (and actual) value function, its partials, and HJB diagnostics.

The value w of the extraction problem is assembled piecewise from the
regions of `boundary.classify`:

    waiting   w = A(y) psi(x)
    sell-2    w = A(y-z) psi(x - alpha z) + (x-c) z - alpha z^2 / 2,
              z = z(x, y) the lump landing the state on the boundary
    sell-1    w = (x-c) y - alpha y^2 / 2          (deplete immediately)

On the Brownian branch psi(x) = exp(n x) collapses everything to closed
forms.  The coefficient A(y) is pinned by second-order smooth fit across the
boundary; writing q = F^{-1}(y) for the boundary price,

    A(y)  = [(q-c) psi'(q) - psi(q)] / (alpha [psi'(q)^2 - psi''(q) psi(q)])
    A'(y) = [(q-c) psi''(q) - psi'(q)] / (psi''(q) psi(q) - psi'(q)^2)

Both denominators are bounded away from zero by the strict log-convexity of
psi; if either vanishes the psi evaluation itself is broken and we raise.

The directional derivative u = alpha w_x + w_y is the value of an optimal
stopping problem and satisfies its own variational inequality; evaluators
and samplers for both inequalities live here so verification failures can
be attributed to a layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .boundary import (
    BoundaryTable,
    CriticalPrices,
    Region,
    build_table,
    classify,
    critical_prices,
    solve_z,
)
from .errors import DomainError, NumericsError
from .specfun import ModelParams, QuadratureSpec, bm_exponent, psi_eval

__all__ = [
    "ValuePoint",
    "HJBReport",
    "Solution",
    "coeff_A",
    "coeff_A_prime",
    "value_ou",
    "value_bm",
    "hjb_residuals",
    "stopping_value",
    "stopping_hjb_residuals",
    "chi_diagnostic",
    "growth_constant",
]


@dataclass(frozen=True)
class ValuePoint:
    x: float
    y: float
    w: float
    w_x: float
    w_xx: float
    w_y: float
    region: Region


def _coeffs_at_price(q: float, p: ModelParams, spec) -> tuple[float, float]:
    """(A, A') expressed through the boundary price q = F^{-1}(y)."""
    ev = psi_eval(q, p, spec)
    p0, p1, p2 = ev.value(0), ev.value(1), ev.value(2)
    wron = p2 * p0 - p1 * p1
    if wron <= 0.0:
        raise NumericsError(
            f"psi''psi - psi'^2 = {wron:.3e} <= 0 at x={q}; psi evaluation broken"
        )
    a_val = ((q - p.c) * p1 - p0) / (p.alpha * (p1 * p1 - p2 * p0))
    a_prime = ((q - p.c) * p2 - p1) / wron
    return a_val, a_prime


def coeff_A(
    y: float,
    p: ModelParams,
    prices: CriticalPrices,
    table: BoundaryTable,
    spec: QuadratureSpec | None = None,
) -> float:
    """Waiting-region coefficient A(y); A(0) = 0, bounded, increasing."""
    if y < 0:
        raise DomainError("coeff_A requires y >= 0")
    if y == 0.0:
        return 0.0
    return _coeffs_at_price(table.F_inverse(y), p, spec)[0]


def coeff_A_prime(
    y: float,
    p: ModelParams,
    prices: CriticalPrices,
    table: BoundaryTable,
    spec: QuadratureSpec | None = None,
) -> float:
    """dA/dy, strictly positive for y > 0."""
    if y <= 0:
        raise DomainError("coeff_A_prime requires y > 0")
    return _coeffs_at_price(table.F_inverse(y), p, spec)[1]


def value_ou(
    x: float,
    y: float,
    p: ModelParams,
    prices: CriticalPrices,
    table: BoundaryTable,
    spec: QuadratureSpec | None = None,
) -> ValuePoint:
    """Value and partials on the mean-reverting branch."""
    if not p.mean_reverting:
        raise DomainError("value_ou requires b > 0")
    if y < 0:
        raise DomainError("value_ou requires y >= 0")
    region = classify(x, y, p, table)
    if y == 0.0:
        return ValuePoint(x, y, 0.0, 0.0, 0.0, 0.0, region)
    if region is Region.SELL1:
        return ValuePoint(
            x,
            y,
            (x - p.c) * y - 0.5 * p.alpha * y * y,
            y,
            0.0,
            x - p.c - p.alpha * y,
            region,
        )
    if region is Region.SELL2:
        z = solve_z(x, y, p, table)
        q = x - p.alpha * z
    else:
        # waiting region, and boundary points by smooth fit
        z = 0.0
        q = table.F_inverse(y) if region is Region.BOUNDARY else x
    if region is Region.WAITING:
        a_val, a_prime = _coeffs_at_price(table.F_inverse(y), p, spec)
        ev = psi_eval(x, p, spec)
    else:
        a_val, a_prime = _coeffs_at_price(q, p, spec)
        ev = psi_eval(q, p, spec)
    p0, p1, p2 = ev.value(0), ev.value(1), ev.value(2)
    w = a_val * p0 + (x - p.c) * z - 0.5 * p.alpha * z * z
    return ValuePoint(
        x,
        y,
        w,
        a_val * p1 + z,
        a_val * p2,
        a_prime * p0,
        region,
    )


def value_bm(x: float, y: float, p: ModelParams) -> ValuePoint:
    """Closed-form value and partials on the Brownian branch."""
    if p.mean_reverting:
        raise DomainError("value_bm requires b == 0")
    if y < 0:
        raise DomainError("value_bm requires y >= 0")
    n = bm_exponent(p)
    x_star = p.c + 1.0 / n
    region = classify(x, y, p, x_star)
    al = p.alpha
    if y == 0.0:
        return ValuePoint(x, y, 0.0, 0.0, 0.0, 0.0, region)
    if region is Region.SELL1:
        return ValuePoint(
            x,
            y,
            (x - p.c) * y - 0.5 * al * y * y,
            y,
            0.0,
            x - p.c - al * y,
            region,
        )
    if region is Region.SELL2:
        jump = (x - x_star) / al
        ybar = y - jump
        e = math.exp(-al * n * ybar)
        w = (1.0 - e) / (al * n * n) + (x - p.c) * jump - 0.5 * jump * jump * al
        return ValuePoint(
            x, y, w, -e / (al * n) + (x - p.c) / al, (1.0 - e) / al, e / n, region
        )
    # waiting (x <= x_star), boundary included
    g = math.exp((x - p.c) * n - 1.0)
    e = math.exp(-al * n * y)
    return ValuePoint(
        x,
        y,
        g * (1.0 - e) / (al * n * n),
        g * (1.0 - e) / (al * n),
        g * (1.0 - e) / al,
        g * e / n,
        region,
    )


@dataclass
class Solution:
    """Solved instance: parameters, critical prices, boundary table.

    The handle is immutable once built and safe to share across threads;
    all evaluation goes through pure functions of it.
    """

    params: ModelParams
    spec: QuadratureSpec
    prices: CriticalPrices
    table: BoundaryTable | None = None

    @classmethod
    def build(
        cls,
        p: ModelParams,
        spec: QuadratureSpec | None = None,
        **table_kwargs,
    ) -> "Solution":
        spec = spec if spec is not None else QuadratureSpec()
        prices = critical_prices(p, spec)
        table = None
        if p.mean_reverting:
            table = build_table(p, spec, prices=prices, **table_kwargs)
        return cls(params=p, spec=spec, prices=prices, table=table)

    @property
    def branch(self) -> str:
        return self.prices.branch

    def drift(self, x):
        return self.params.a - self.params.b * x

    def threshold(self, y: float) -> float:
        """Boundary price triggering extraction at reserve level y."""
        if self.branch == "bm":
            return self.prices.x_star
        return self.table.F_inverse(y)

    def region(self, x: float, y: float) -> Region:
        handle = self.table if self.branch == "ou" else self.prices
        return classify(x, y, self.params, handle)

    def value_point(self, x: float, y: float) -> ValuePoint:
        if self.branch == "bm":
            return value_bm(x, y, self.params)
        return value_ou(x, y, self.params, self.prices, self.table, self.spec)

    def value(self, x: float, y: float) -> float:
        return self.value_point(x, y).w

    def coeff_A(self, y: float) -> float:
        if self.branch == "bm":
            n = self.prices.n
            return (
                math.exp(-self.params.c * n - 1.0)
                * (1.0 - math.exp(-self.params.alpha * n * y))
                / (self.params.alpha * n * n)
            )
        return coeff_A(y, self.params, self.prices, self.table, self.spec)

    def stopping_value(self, x: float, y: float) -> float:
        return stopping_value(x, y, self)


def hjb_residuals(
    states,
    sol: Solution,
    *,
    interior_tol: float = 1e-7,
    constraint_tol: float = 1e-8,
) -> "HJBReport":
    """Evaluate both members of the variational inequality at given states.

    Waiting states must kill the generator term and have strictly negative
    gradient-constraint slack; selling states must satisfy the constraint to
    `constraint_tol` with a nonpositive generator term.  Failures become
    report rows, not exceptions.
    """
    rows = []
    p = sol.params
    for x, y in states:
        vp = sol.value_point(float(x), float(y))
        gen = 0.5 * p.sigma**2 * vp.w_xx + sol.drift(x) * vp.w_x - p.rho * vp.w
        slack = -p.alpha * vp.w_x - vp.w_y + x - p.c
        if vp.region is Region.WAITING:
            ok = abs(gen) <= interior_tol * (1.0 + abs(vp.w)) and slack < 0.0
        elif vp.region is Region.BOUNDARY:
            ok = abs(gen) <= interior_tol * (1.0 + abs(vp.w)) and abs(
                slack
            ) <= constraint_tol * (1.0 + abs(x))
        else:
            ok = (
                abs(slack) <= constraint_tol * (1.0 + abs(x))
                and gen <= constraint_tol
            )
        rows.append((float(x), float(y), vp.region, vp.w, gen, slack, ok))
    return HJBReport(rows=rows)


@dataclass
class HJBReport:
    """Row-per-state outcome of the variational-inequality checks."""

    rows: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r[-1] for r in self.rows)

    @property
    def failures(self):
        return [r for r in self.rows if not r[-1]]

    def summary(self) -> dict:
        by_region: dict = {}
        for x, y, region, w, gen, slack, ok in self.rows:
            d = by_region.setdefault(
                region.value,
                {
                    "count": 0,
                    "max_abs_generator": 0.0,
                    "max_generator": -math.inf,
                    "max_slack": -math.inf,
                    "max_abs_slack": 0.0,
                    "failures": 0,
                },
            )
            d["count"] += 1
            d["max_abs_generator"] = max(d["max_abs_generator"], abs(gen))
            d["max_generator"] = max(d["max_generator"], gen)
            d["max_slack"] = max(d["max_slack"], slack)
            d["max_abs_slack"] = max(d["max_abs_slack"], abs(slack))
            d["failures"] += 0 if ok else 1
        return {"passed": self.passed, "regions": by_region}


def stopping_value(x: float, y: float, sol: Solution) -> float:
    """Directional derivative u = alpha w_x + w_y (a stopping value)."""
    vp = sol.value_point(x, y)
    return sol.params.alpha * vp.w_x + vp.w_y


def stopping_hjb_residuals(states, sol: Solution, *, tol: float = 1e-7):
    """Check max{L u - rho u - alpha b A(y) psi'(x), x - c - u} = 0 a.e.

    Returns (rows, passed).  Rows carry (x, y, region, u, generator member,
    obstacle member, ok).  Only meaningful for b > 0; the Brownian branch
    reduces to the same inequality with b = 0, handled through closed forms.
    """
    p = sol.params
    rows = []
    for x, y in states:
        x, y = float(x), float(y)
        u = stopping_value(x, y, sol)
        region = sol.region(x, y)
        a_val = sol.coeff_A(y)
        if sol.branch == "ou":
            ev = psi_eval(x, p, sol.spec)
            run_cost = p.alpha * p.b * a_val * ev.value(1)
            if region is Region.WAITING:
                a_prime = coeff_A_prime(y, p, sol.prices, sol.table, sol.spec)
                u_x = p.alpha * a_val * ev.value(2) + a_prime * ev.value(1)
                u_xx = p.alpha * a_val * ev.value(3) + a_prime * ev.value(2)
            else:
                u_x, u_xx = 1.0, 0.0
        else:
            run_cost = 0.0
            n = sol.prices.n
            if region is Region.WAITING:
                u_x = n * u
                u_xx = n * n * u
            else:
                u_x, u_xx = 1.0, 0.0
        gen = 0.5 * p.sigma**2 * u_xx + sol.drift(x) * u_x - p.rho * u - run_cost
        obstacle = x - p.c - u
        if region in (Region.WAITING, Region.BOUNDARY):
            ok = abs(gen) <= tol * (1.0 + abs(u)) and obstacle <= tol
        else:
            ok = abs(obstacle) <= tol and gen <= tol
        rows.append((x, y, region, u, gen, obstacle, ok))
    return rows, all(r[-1] for r in rows)


def chi_diagnostic(sol: Solution, n_points: int = 50):
    """Sample the unproven sign quantity chi on (x_inf, x0].

    chi(q) = (rho + 2b)(x_hat - q)
             + b psi(q) [((q-c) psi''(q) - psi'(q)) / (psi''psi - psi'^2)],
    x_hat = (a + (rho+b) c)/(rho + 2b).  Negativity is conjectured but not
    proven; callers report the observed sign instead of asserting it.
    """
    if sol.branch != "ou":
        raise DomainError("chi diagnostic applies to the mean-reverting branch")
    p = sol.params
    x_hat = (p.a + (p.rho + p.b) * p.c) / (p.rho + 2.0 * p.b)
    x_inf, x0 = sol.prices.x_inf, sol.prices.x0
    qs = x_inf + (x0 - x_inf) * np.linspace(1e-4, 1.0, n_points)
    vals = np.empty(n_points)
    for i, qq in enumerate(qs):
        ev = psi_eval(float(qq), p, sol.spec)
        p0, p1, p2 = ev.value(0), ev.value(1), ev.value(2)
        wron = p2 * p0 - p1 * p1
        vals[i] = (p.rho + 2.0 * p.b) * (x_hat - qq) + p.b * p0 * (
            (qq - p.c) * p2 - p1
        ) / wron
    return qs, vals


def growth_constant(sol: Solution, xs, ys) -> float:
    """max of w / (y (1+y) (1+|x|)) over a reference grid (y > 0)."""
    best = 0.0
    for x in xs:
        for y in ys:
            if y <= 0:
                continue
            w = sol.value(float(x), float(y))
            best = max(best, w / (y * (1.0 + y) * (1.0 + abs(x))))
    return best
