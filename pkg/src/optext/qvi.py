"""Finite-difference solver for the extraction variational inequality.

Independent, method-distinct check of the closed-form solution: on a
truncated (price, reserve) grid the dynamic program

    v(x, y) = max( one-step PDE value under the discounted generator,
                   v(x - alpha dy, y - dy) + (x - c) dy - alpha dy^2 / 2 )

is solved with the extraction quantum dy tied to the reserve grid.  Because
extraction only ever moves the reserve DOWN one level, rows decouple: each
reserve level solves a one-dimensional obstacle problem against the row
below, by policy iteration over the active (extraction) set with
tridiagonal solves.  The y = 0 row is identically zero and the far-field
columns are closed with the analytic branch values, so discrepancies
concentrate where they are informative, near the free boundary.

The spatial stencil uses central differencing for the drift wherever the
resulting off-diagonals stay nonnegative (true for all sane grids here) and
falls back to one-sided upwinding otherwise, preserving the monotone
M-matrix sign pattern either way.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .boundary import Region
from .errors import ConfigError, NumericsError
from .value import Solution

__all__ = ["GridSpec", "QviResult", "QviReport", "default_grid", "solve_qvi", "compare"]


@dataclass(frozen=True)
class GridSpec:
    """Truncated-domain grid for the discrete variational inequality."""

    x_lo: float
    x_hi: float
    nx: int
    y_max: float
    ny: int
    tol: float = 1e-9
    max_sweeps: int = 200

    def __post_init__(self):
        if not (self.x_lo < self.x_hi):
            raise ConfigError("x_lo must be below x_hi")
        if self.nx < 11 or self.ny < 3:
            raise ConfigError("grid needs nx >= 11 and ny >= 3")
        if self.y_max <= 0:
            raise ConfigError("y_max must be > 0")
        if self.tol <= 0 or self.max_sweeps < 1:
            raise ConfigError("tol must be > 0 and max_sweeps >= 1")

    @property
    def dx(self) -> float:
        return (self.x_hi - self.x_lo) / (self.nx - 1)

    @property
    def dy(self) -> float:
        return self.y_max / (self.ny - 1)


def default_grid(sol: Solution, nx: int = 400, ny: int = 60, margin: float = 1.3,
                 tol: float = 1e-9) -> GridSpec:
    """Grid with the free boundary well inside and alpha*dy >= dx."""
    if sol.branch == "ou":
        lo_ref, hi_ref = sol.prices.x_inf, sol.prices.x0
    else:
        lo_ref = hi_ref = sol.prices.x_star
    x_lo = lo_ref - margin - 1.5 * (sol.branch == "bm")
    x_hi = hi_ref + margin
    dx = (x_hi - x_lo) / (nx - 1)
    y_max = max(2.6, 1.02 * (ny - 1) * dx / sol.params.alpha)
    return GridSpec(x_lo=x_lo, x_hi=x_hi, nx=nx, y_max=y_max, ny=ny, tol=tol)


@dataclass
class QviResult:
    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray  # (ny, nx)
    active: np.ndarray  # (ny, nx) bool, extraction branch binding
    sweeps: int
    grid: GridSpec


def _check_domain(sol: Solution, g: GridSpec) -> None:
    if sol.branch == "ou":
        lo_ref, hi_ref = sol.prices.x_inf, sol.prices.x0
    else:
        lo_ref = hi_ref = sol.prices.x_star
    if not (g.x_lo < lo_ref - 1.0 and g.x_hi > hi_ref + 1.0):
        raise ConfigError(
            "grid must contain the boundary with >= 1 margin: "
            f"[{g.x_lo}, {g.x_hi}] vs [{lo_ref}, {hi_ref}]"
        )
    if sol.params.alpha * g.dy < g.dx * (1.0 - 1e-12):
        raise ConfigError(
            f"extraction quantum alpha*dy = {sol.params.alpha * g.dy:.4g} "
            f"must cover one x-cell dx = {g.dx:.4g}"
        )


def _stencil(sol: Solution, xs: np.ndarray, dx: float):
    """Nonnegative off-diagonals (lower, upper) and diagonal of L - rho."""
    p = sol.params
    diff = 0.5 * p.sigma**2 / dx**2
    mu = p.a - p.b * xs
    lower = np.empty_like(xs)
    upper = np.empty_like(xs)
    central_ok = diff >= np.abs(mu) / (2.0 * dx)
    lower = np.where(central_ok, diff - mu / (2.0 * dx), np.nan)
    upper = np.where(central_ok, diff + mu / (2.0 * dx), np.nan)
    up = ~central_ok & (mu > 0)
    dn = ~central_ok & (mu <= 0)
    lower[up] = diff
    upper[up] = diff + mu[up] / dx
    lower[dn] = diff - mu[dn] / dx
    upper[dn] = diff
    diag = -(lower + upper) - p.rho
    return lower, diag, upper


def _solve_row(lower, diag, upper, obstacle, v_left, v_right, tol, max_iters,
               active_init):
    """Obstacle problem max(Av, o - v) = 0 on one row by policy iteration."""
    n = obstacle.shape[0]  # interior nodes
    active = active_init.copy()
    v = np.empty(n)
    ab = np.zeros((3, n))
    rhs = np.zeros(n)
    for it in range(max_iters):
        wait = ~active
        ab[0, 1:] = np.where(wait[:-1], upper[:-1], 0.0)
        ab[1, :] = np.where(wait, diag, 1.0)
        ab[2, :-1] = np.where(wait[1:], lower[1:], 0.0)
        rhs[:] = np.where(wait, 0.0, obstacle)
        if wait[0]:
            rhs[0] -= lower[0] * v_left
        if wait[-1]:
            rhs[-1] -= upper[-1] * v_right
        v = solve_banded((1, 1), ab, rhs)
        # generator value at every interior node, with boundary closures
        vl = np.concatenate(([v_left], v[:-1]))
        vr = np.concatenate((v[1:], [v_right]))
        gen = lower * vl + diag * v + upper * vr
        scale = 1.0 + np.abs(v)
        new_active = active.copy()
        new_active[~active & (obstacle - v > tol * scale)] = True
        new_active[active & (gen > tol * scale)] = False
        if np.array_equal(new_active, active):
            return v, active, it + 1
        active = new_active
    raise NumericsError(
        "policy iteration did not settle; residual "
        f"{np.max(np.maximum(gen, obstacle - v)):.3e}"
    )


def solve_qvi(sol: Solution, grid: GridSpec | None = None) -> QviResult:
    """Solve the discrete variational inequality on the truncated grid."""
    if grid is None:
        grid = default_grid(sol)
    _check_domain(sol, grid)
    p = sol.params
    xs = np.linspace(grid.x_lo, grid.x_hi, grid.nx)
    ys = np.linspace(0.0, grid.y_max, grid.ny)
    dy = grid.dy
    values = np.zeros((grid.ny, grid.nx))
    active = np.zeros((grid.ny, grid.nx), dtype=bool)
    lower, diag, upper = _stencil(sol, xs[1:-1], grid.dx)
    jump_gain = (xs[1:-1] - p.c) * dy - 0.5 * p.alpha * dy * dy
    x_jump = xs[1:-1] - p.alpha * dy
    sweeps = 0
    act_row = np.zeros(grid.nx - 2, dtype=bool)
    for j in range(1, grid.ny):
        yj = ys[j]
        v_left = sol.value(grid.x_lo, yj)
        v_right = sol.value(grid.x_hi, yj)
        below = values[j - 1]
        obstacle = np.interp(x_jump, xs, below) + jump_gain
        v, act_row, iters = _solve_row(
            lower,
            diag,
            upper,
            obstacle,
            v_left,
            v_right,
            grid.tol,
            grid.max_sweeps,
            act_row,
        )
        sweeps += iters
        values[j, 0] = v_left
        values[j, -1] = v_right
        values[j, 1:-1] = v
        active[j, 1:-1] = act_row
    return QviResult(xs=xs, ys=ys, values=values, active=active, sweeps=sweeps,
                     grid=grid)


@dataclass
class QviReport:
    sup_rel: float
    by_region: dict
    envelope_max_cells: float
    n_interior: int

    @property
    def passed_default(self) -> bool:
        return self.sup_rel <= 0.03 and self.envelope_max_cells <= 2.0


def compare(res: QviResult, sol: Solution) -> QviReport:
    """Discrepancy of the grid solution against the analytic surface."""
    sup_rel = 0.0
    by_region: dict = {}
    n_int = 0
    for j in range(1, res.ys.shape[0]):
        yj = float(res.ys[j])
        for i in range(1, res.xs.shape[0] - 1):
            vp = sol.value_point(float(res.xs[i]), yj)
            rel = abs(res.values[j, i] - vp.w) / (1.0 + abs(vp.w))
            sup_rel = max(sup_rel, rel)
            key = (
                "waiting"
                if vp.region in (Region.WAITING, Region.BOUNDARY)
                else vp.region.value
            )
            d = by_region.setdefault(key, {"count": 0, "sup_rel": 0.0})
            d["count"] += 1
            d["sup_rel"] = max(d["sup_rel"], rel)
            n_int += 1
    env = 0.0
    for j in range(1, res.ys.shape[0]):
        idx = np.nonzero(res.active[j])[0]
        if idx.size == 0:
            continue
        x_env = res.xs[idx[0]]
        thr = sol.threshold(float(res.ys[j]))
        env = max(env, abs(x_env - thr) / res.grid.dx)
    return QviReport(
        sup_rel=sup_rel, by_region=by_region, envelope_max_cells=env,
        n_interior=n_int,
    )
