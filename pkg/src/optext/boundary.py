"""Critical prices and the free boundary separating waiting from selling.

Brownian branch (b == 0): the boundary is the constant price
x_star = c + 1/n, with n the positive exponent of the fundamental solution.

Mean-reverting branch (b > 0): two critical prices bracket the action,

    x0    root of (x-c) psi'(x)  - psi(x)  = 0   (boundary at zero reserve)
    x_inf root of (x-c) psi''(x) - psi'(x) = 0   (infinite-reserve boundary)

with c < x_inf < x0, and the boundary curve F on (x_inf, x0] is obtained by
integrating

    F(x) = integral_x^{x0} Theta(z) dz,
    Theta(z) = [psi'''(z) L0(z) - psi''(z) L1(z)] psi(z)
               / ( -alpha [psi''(z) psi(z) - psi'(z)^2] L1(z) ),

where L0 = (z-c) psi' - psi and L1 = (z-c) psi'' - psi'.  F is strictly
decreasing, F(x0) = 0, and F blows up at x_inf, where Theta has a simple
pole; beyond the tabulated range the table falls back to the local model
Theta ~ kappa/(z - x_inf), i.e. a logarithmic tail for F (an implementation
choice, recorded in the table metadata).

A state (x, y) with reserve y > 0 is in the waiting region when
x < F^{-1}(y), is depleted immediately when y <= (x - x0)/alpha, and
otherwise receives a lump extraction z(x, y) solving y - z = F(x - alpha z).
"""

from __future__ import annotations

import enum
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.interpolate import BPoly, CubicHermiteSpline, PchipInterpolator
from scipy.optimize import brentq

from .errors import DomainError, NumericsError
from .specfun import ModelParams, PsiEval, QuadratureSpec, bm_exponent, psi_eval

__all__ = [
    "Region",
    "CriticalPrices",
    "BoundaryTable",
    "critical_prices",
    "find_x0",
    "find_x_inf",
    "x_bar",
    "x_star_bm",
    "boundary_integrand",
    "build_table",
    "solve_z",
    "classify",
]

_ROOT_XTOL = 1e-13
_RESID_RTOL = 1e-10


class Region(enum.Enum):
    WAITING = "waiting"
    SELL1 = "sell1"
    SELL2 = "sell2"
    BOUNDARY = "boundary"


@dataclass(frozen=True)
class CriticalPrices:
    """Critical price levels of one instance.

    branch "bm": n and x_star are set.  branch "ou": x0, x_inf, x_bar are
    set.  Unused fields are None.
    """

    branch: str
    n: float | None = None
    x_star: float | None = None
    x0: float | None = None
    x_inf: float | None = None
    x_bar: float | None = None


def x_bar(p: ModelParams) -> float:
    """(a + rho c)/(rho + b); lies strictly below x0 on the b > 0 branch."""
    return (p.a + p.rho * p.c) / (p.rho + p.b)


def x_star_bm(p: ModelParams) -> float:
    """Constant free boundary c + 1/n of the Brownian branch."""
    return p.c + 1.0 / bm_exponent(p)


def _lam(ev: PsiEval, k: int, c: float) -> float:
    # (x-c) psi^(k+1) - psi^(k), in the eval's mantissa scaling
    return (ev.x - c) * float(ev.values[k + 1]) - float(ev.values[k])


def _find_critical(p: ModelParams, spec: QuadratureSpec | None, k: int) -> float:
    """Unique root > c of (x-c) psi^(k+1)(x) - psi^(k)(x) = 0."""
    c = p.c
    f = lambda x: _lam(psi_eval(x, p, spec), k, c)
    ev_c = psi_eval(c, p, spec)
    hi = c + ev_c.ratio(k, k + 1) * (1.0 + 1e-12) + 1e-12
    lo = c
    for _ in range(80):
        if f(hi) > 0.0:
            break
        lo, hi = hi, c + 2.0 * (hi - c)
    else:
        raise NumericsError(
            f"no sign change while bracketing critical price (k={k}); "
            "psi evaluation is suspect"
        )
    root = brentq(f, lo, hi, xtol=_ROOT_XTOL, rtol=4 * np.finfo(float).eps)
    ev = psi_eval(root, p, spec)
    resid = abs(_lam(ev, k, c))
    scale = max(float(ev.values[k]), (root - c) * float(ev.values[k + 1]))
    if resid > _RESID_RTOL * scale:
        raise NumericsError(
            f"critical-price residual {resid:.2e} above tolerance", partial=root
        )
    return root


def find_x0(p: ModelParams, spec: QuadratureSpec | None = None) -> float:
    if not p.mean_reverting:
        raise DomainError("find_x0 requires b > 0")
    return _find_critical(p, spec, 0)


def find_x_inf(p: ModelParams, spec: QuadratureSpec | None = None) -> float:
    if not p.mean_reverting:
        raise DomainError("find_x_inf requires b > 0")
    return _find_critical(p, spec, 1)


def critical_prices(
    p: ModelParams, spec: QuadratureSpec | None = None
) -> CriticalPrices:
    if not p.mean_reverting:
        n = bm_exponent(p)
        return CriticalPrices(branch="bm", n=n, x_star=p.c + 1.0 / n)
    x0 = find_x0(p, spec)
    xinf = find_x_inf(p, spec)
    if not (p.c < xinf < x0):
        raise NumericsError(
            f"critical prices out of order: c={p.c}, x_inf={xinf}, x0={x0}"
        )
    return CriticalPrices(branch="ou", x0=x0, x_inf=xinf, x_bar=x_bar(p))


def boundary_integrand(
    z: float,
    p: ModelParams,
    spec: QuadratureSpec | None = None,
    x_inf: float | None = None,
) -> float:
    """Theta(z) = -F'(z) >= 0; has a simple pole at x_inf."""
    if x_inf is not None and z <= x_inf:
        raise DomainError(f"boundary integrand needs z > x_inf ({x_inf}), got {z}")
    ev = psi_eval(z, p, spec)
    p0, p1, p2, p3 = (float(v) for v in ev.values)
    lam0 = (z - p.c) * p1 - p0
    lam1 = (z - p.c) * p2 - p1
    wron = p2 * p0 - p1 * p1
    if lam1 <= 0.0:
        raise DomainError(
            f"boundary integrand evaluated at z={z} left of the asymptote"
        )
    return (p3 * lam0 - p2 * lam1) * p0 / (-p.alpha * wron * lam1)


def _theta_and_deriv(z: float, p: ModelParams, spec: QuadratureSpec | None):
    """(Theta, Theta') at z.

    The fourth psi derivative entering Theta' is eliminated through the
    exact identity (sigma^2/2) psi'''' = (rho+2b) psi'' - (a-bz) psi''', so
    quadrature still stops at order three.
    """
    ev = psi_eval(z, p, spec)
    p0, p1, p2, p3 = (float(v) for v in ev.values)
    p4 = 2.0 / p.sigma**2 * ((p.rho + 2.0 * p.b) * p2 - (p.a - p.b * z) * p3)
    zc = z - p.c
    lam0 = zc * p1 - p0
    lam1 = zc * p2 - p1
    wron = p2 * p0 - p1 * p1
    if lam1 <= 0.0:
        raise DomainError(
            f"boundary integrand evaluated at z={z} left of the asymptote"
        )
    num = (p3 * lam0 - p2 * lam1) * p0
    den = -p.alpha * wron * lam1
    num_d = (p4 * lam0 + p3 * (zc * p2) - p3 * lam1 - p2 * (zc * p3)) * p0 + (
        p3 * lam0 - p2 * lam1
    ) * p1
    den_d = -p.alpha * ((p3 * p0 - p1 * p2) * lam1 + wron * (zc * p3))
    theta = num / den
    return theta, (num_d - theta * den_d) / den


@dataclass
class BoundaryTable:
    """Monotone tabulation of the free boundary F on (x_inf, x0].

    nodes is a strictly increasing price grid ending exactly at x0;
    f_values the corresponding (strictly decreasing) reserve levels with
    f_values[-1] == 0.  Interpolation runs in the log-offset coordinate
    v = log(x - x_inf), where F is asymptotically linear with slope
    -tail_kappa.  With nodal `slopes` (dF/dx = -Theta) and `curvatures`
    (d2F/dx2 = -Theta') the interpolant is the piecewise quintic matching
    value, slope and curvature at every node, which keeps even
    finite-difference second derivatives of downstream quantities faithful;
    with slopes alone it degrades to a cubic Hermite, and with neither to a
    monotone PCHIP fit (e.g. after a CSV reload without parameters).
    Left of nodes[0] the logarithmic tail
    F(x) = F(nodes[0]) + tail_kappa * log((nodes[0]-x_inf)/(x-x_inf))
    extends the table toward the asymptote.
    """

    nodes: np.ndarray
    f_values: np.ndarray
    x_inf: float
    x0: float
    tail_kappa: float
    slopes: np.ndarray | None = None
    curvatures: np.ndarray | None = None
    interpolation: str = "loghermite"
    _fwd: object = field(init=False, repr=False)
    _inv_guess: PchipInterpolator = field(init=False, repr=False)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.f_values = np.asarray(self.f_values, dtype=float)
        if self.nodes.ndim != 1 or self.nodes.shape != self.f_values.shape:
            raise DomainError("nodes/f_values must be matching 1-d arrays")
        if np.any(np.diff(self.nodes) <= 0):
            raise DomainError("nodes must be strictly increasing")
        if np.any(np.diff(self.f_values) >= 0):
            raise DomainError("f_values must be strictly decreasing")
        if self.interpolation != "loghermite":
            raise DomainError(f"unknown interpolation rule {self.interpolation!r}")
        r = self.nodes - self.x_inf
        v = np.log(r)
        if self.slopes is not None:
            self.slopes = np.asarray(self.slopes, dtype=float)
            if np.any(self.slopes >= 0):
                raise DomainError("boundary slopes must be strictly negative")
            dfdv = self.slopes * r
            if self.curvatures is not None:
                self.curvatures = np.asarray(self.curvatures, dtype=float)
                d2fdv2 = self.curvatures * r * r + dfdv
                self._fwd = BPoly.from_derivatives(
                    v,
                    np.column_stack([self.f_values, dfdv, d2fdv2]),
                    extrapolate=False,
                )
            else:
                self._fwd = CubicHermiteSpline(
                    v, self.f_values, dfdv, extrapolate=False
                )
        else:
            self._fwd = PchipInterpolator(v, self.f_values, extrapolate=False)
        # decreasing data flipped to an increasing inverse initial guess
        self._inv_guess = PchipInterpolator(
            self.f_values[::-1], v[::-1], extrapolate=False
        )

    @property
    def f_max(self) -> float:
        return float(self.f_values[0])

    def F(self, x):
        """Boundary reserve level at price x (0 beyond x0, tail below nodes)."""
        x_arr = np.asarray(x, dtype=float)
        out = np.empty_like(x_arr)
        above = x_arr >= self.x0
        below = x_arr < self.nodes[0]
        mid = ~above & ~below
        out[above] = 0.0
        if np.any(mid):
            out[mid] = self._fwd(np.log(x_arr[mid] - self.x_inf))
        if np.any(below):
            xb = x_arr[below]
            off = xb - self.x_inf
            tail = np.full_like(xb, np.inf)
            ok = off > 0
            off0 = self.nodes[0] - self.x_inf
            tail[ok] = self.f_values[0] + self.tail_kappa * np.log(off0 / off[ok])
            out[below] = tail
        return out if out.ndim else float(out)

    def F_inverse(self, y: float) -> float:
        """Unique x in (x_inf, x0] with F(x) = y; tail model beyond the table."""
        if y < 0:
            raise DomainError("F_inverse requires y >= 0")
        if y == 0.0:
            return self.x0
        if y > self.f_max:
            off0 = self.nodes[0] - self.x_inf
            return self.x_inf + off0 * math.exp(-(y - self.f_max) / self.tail_kappa)
        v_lo = math.log(self.nodes[0] - self.x_inf)
        v_hi = math.log(self.x0 - self.x_inf)
        guess = float(self._inv_guess(y))
        lo = max(v_lo, guess - 0.05)
        hi = min(v_hi, guess + 0.05)
        g = lambda v: float(self._fwd(v)) - y
        if g(lo) * g(hi) > 0:  # widen to the full table if the local bracket missed
            lo, hi = v_lo, v_hi
        v_root = brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        return self.x_inf + math.exp(v_root)

    def shifted(self, dx: float) -> "BoundaryTable":
        """The same curve translated by dx in price (perturbed policies)."""
        return BoundaryTable(
            nodes=self.nodes + dx,
            f_values=self.f_values.copy(),
            x_inf=self.x_inf + dx,
            x0=self.x0 + dx,
            tail_kappa=self.tail_kappa,
            slopes=None if self.slopes is None else self.slopes.copy(),
            curvatures=None if self.curvatures is None else self.curvatures.copy(),
        )

    def write_csv(self, fp) -> None:
        fp.write(
            f"# optext-boundary-v1 x_inf={self.x_inf!r} x0={self.x0!r} "
            f"tail_kappa={self.tail_kappa!r} interpolation={self.interpolation}\n"
        )
        fp.write("x,F\n")
        for x, f in zip(self.nodes, self.f_values):
            fp.write(f"{float(x)!r},{float(f)!r}\n")

    def to_csv(self, path) -> None:
        with open(path, "w") as fp:
            self.write_csv(fp)

    @classmethod
    def from_csv(
        cls,
        path,
        p: ModelParams | None = None,
        spec: QuadratureSpec | None = None,
    ) -> "BoundaryTable":
        """Rebuild a table from its CSV dump.

        Passing the model parameters recomputes the exact nodal slopes and
        curvatures and restores full interpolation fidelity; without them
        the table falls back to slopes fitted from the tabulated data.
        """
        with open(path) as fp:
            header = fp.readline().strip()
            if not header.startswith("# optext-boundary-v1"):
                raise DomainError(f"not a boundary table: {header[:40]!r}")
            meta = dict(
                item.split("=", 1) for item in header[2:].split() if "=" in item
            )
            cols = fp.readline().strip()
            if cols != "x,F":
                raise DomainError(f"unexpected column header {cols!r}")
            data = np.loadtxt(fp, delimiter=",", ndmin=2)
        slopes = curvatures = None
        if p is not None:
            pairs = [_theta_and_deriv(float(x), p, spec) for x in data[:, 0]]
            slopes = -np.array([t for t, _ in pairs])
            curvatures = -np.array([td for _, td in pairs])
        return cls(
            nodes=data[:, 0],
            f_values=data[:, 1],
            x_inf=float(meta["x_inf"]),
            x0=float(meta["x0"]),
            tail_kappa=float(meta["tail_kappa"]),
            slopes=slopes,
            curvatures=curvatures,
            interpolation=meta.get("interpolation", "loghermite"),
        )

    def to_csv_bytes(self) -> bytes:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue().encode()


def _panel(p, spec, x_inf, z_lo, z_hi, near_frac, delta):
    """integral of Theta over [z_lo, z_hi]; log substitution near the pole."""
    theta = lambda z: boundary_integrand(z, p, spec)
    with warnings.catch_warnings():
        # the explicit error gate below replaces quadpack's warning
        warnings.simplefilter("ignore", IntegrationWarning)
        if z_hi - x_inf <= near_frac * delta:
            g = lambda v: theta(x_inf + math.exp(v)) * math.exp(v)
            val, err = quad(
                g,
                math.log(z_lo - x_inf),
                math.log(z_hi - x_inf),
                epsabs=1e-12,
                epsrel=1e-10,
                limit=spec.max_subdivisions,
            )
        else:
            val, err = quad(
                theta,
                z_lo,
                z_hi,
                epsabs=1e-12,
                epsrel=1e-10,
                limit=spec.max_subdivisions,
            )
    if err > 1e-7 * max(val, 1.0):
        raise NumericsError(
            f"free-boundary quadrature failed on [{z_lo}, {z_hi}]", partial=val
        )
    return val


def build_table(
    p: ModelParams,
    spec: QuadratureSpec | None = None,
    *,
    prices: CriticalPrices | None = None,
    n_nodes: int = 72,
    min_offset_frac: float = 1e-6,
    y_target: float | None = None,
) -> BoundaryTable:
    """Tabulate F by integrating Theta from x0 down toward x_inf.

    Nodes are uniform in log(x - x_inf) between `min_offset_frac` times the
    boundary width and the width itself (i.e. geometrically graded toward
    the asymptote), matching the coordinate the table interpolates in; pass
    `y_target` to keep extending toward x_inf until the table covers that
    reserve level.
    """
    if not p.mean_reverting:
        raise DomainError("build_table requires b > 0")
    if spec is None:
        spec = QuadratureSpec()
    if prices is None:
        prices = critical_prices(p, spec)
    x0, x_inf = prices.x0, prices.x_inf
    delta = x0 - x_inf

    if n_nodes < 16:
        raise DomainError("n_nodes must be >= 16")
    v_grid = np.linspace(math.log(min_offset_frac), 0.0, n_nodes - 1)
    offsets = np.concatenate(
        [np.exp(v_grid) * delta, [min_offset_frac * delta, 1e-3 * delta, 0.5 * delta]]
    )
    offsets = np.sort(offsets)
    # drop near-duplicates so the node grid stays strictly increasing
    keep = np.concatenate([[True], np.diff(offsets) > 1e-9 * delta])
    nodes = x_inf + offsets[keep]
    nodes[-1] = x0  # exact top node
    dv = -v_grid[0] / (n_nodes - 2)

    f_values = np.zeros_like(nodes)
    for i in range(len(nodes) - 2, -1, -1):
        f_values[i] = f_values[i + 1] + _panel(
            p, spec, x_inf, nodes[i], nodes[i + 1], 0.05, delta
        )

    if y_target is not None:
        off = nodes[0] - x_inf
        while f_values[0] < y_target:
            off *= math.exp(-dv)
            if off < 1e-12 * delta:
                raise NumericsError(
                    f"cannot extend free-boundary table to reserve {y_target}"
                )
            new_node = x_inf + off
            seg = _panel(p, spec, x_inf, new_node, nodes[0], 0.05, delta)
            nodes = np.concatenate(([new_node], nodes))
            f_values = np.concatenate(([f_values[0] + seg], f_values))

    pairs = [_theta_and_deriv(float(x), p, spec) for x in nodes]
    slopes = -np.array([t for t, _ in pairs])
    curvatures = -np.array([td for _, td in pairs])
    kappa = -slopes[0] * (nodes[0] - x_inf)
    return BoundaryTable(
        nodes=nodes,
        f_values=f_values,
        x_inf=x_inf,
        x0=x0,
        tail_kappa=float(kappa),
        slopes=slopes,
        curvatures=curvatures,
    )


def solve_z(
    x: float,
    y: float,
    p: ModelParams,
    table: BoundaryTable,
    *,
    resid_tol: float = 1e-9,
) -> float:
    """Lump extraction z(x, y) solving y - z = F(x - alpha z) on S2.

    The residual map z -> y - z - F(x - alpha z) is strictly decreasing and
    changes sign on ((x - x0)/alpha, min((x - x_inf)/alpha, y)].
    """
    region = classify(x, y, p, table)
    on_seam = (
        region is Region.SELL1
        and y >= (x - table.x0) / p.alpha - 1e-11 * max(1.0, abs(y))
    )
    if region not in (Region.SELL2, Region.BOUNDARY) and not on_seam:
        raise DomainError(f"solve_z needs a state in S2, got {region} at {(x, y)}")
    alpha = p.alpha

    def resid(z):
        return y - z - float(table.F(x - alpha * z))

    lo = max(0.0, (x - table.x0) / alpha)
    r_lo = resid(lo)
    if r_lo <= 0.0:
        return lo  # on the boundary (z = 0) or on the S1/S2 seam
    hi = min(y, (x - table.x_inf) / alpha * (1.0 - 1e-12))
    if resid(hi) > 0.0:
        raise NumericsError(f"solve_z bracket failed at {(x, y)}")
    z = brentq(resid, lo, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps)
    if abs(resid(z)) > resid_tol:
        raise NumericsError(
            f"solve_z residual {resid(z):.2e} above {resid_tol}", partial=z
        )
    return float(z)


def classify(
    x: float,
    y: float,
    p: ModelParams,
    handle,
) -> Region:
    """Locate (x, y) among waiting / deplete-now / lump-extract / boundary.

    `handle` is a BoundaryTable on the mean-reverting branch, and a
    CriticalPrices (or plain threshold price) on the Brownian branch.  Zero
    reserve always waits; a price tie with the boundary is reported as
    BOUNDARY so callers can treat it as reflecting rather than jumping.
    """
    if y < 0:
        raise DomainError("reserve level must be >= 0")
    if y == 0.0:
        return Region.WAITING
    if isinstance(handle, BoundaryTable):
        threshold = handle.F_inverse(y)
        x_ref = handle.x0
    elif isinstance(handle, CriticalPrices):
        if handle.branch != "bm":
            raise DomainError("classify with CriticalPrices expects the bm branch")
        threshold = handle.x_star
        x_ref = handle.x_star
    else:
        threshold = float(handle)
        x_ref = float(handle)
    tol = 1e-11 * max(1.0, abs(x), abs(threshold))
    if x < threshold - tol:
        return Region.WAITING
    if abs(x - threshold) <= tol:
        return Region.BOUNDARY
    if y <= (x - x_ref) / p.alpha:
        return Region.SELL1
    return Region.SELL2
