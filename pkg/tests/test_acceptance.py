"""Acceptance suite: each numbered check runs at its stated tolerance and
prints one PASS/FAIL line (run with `pytest -s` to see them as they go)."""

import numpy as np
import pytest

from optext import (
    ModelParams,
    SimConfig,
    Policy,
    Solution,
    compare,
    default_grid,
    dominance_test,
    hjb_residuals,
    psi_eval,
    simulate_payoff_many,
    simulate_stopping_payoff,
    solve_qvi,
    solve_z,
    stopping_value,
    x_star_bm,
)

from conftest import OU_PARAMS, sample_region_states


def report(num, ok, detail):
    print(f"\nACCEPTANCE {num:02d} {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {num}: {detail}"


def test_criterion_01_brownian_closed_forms(bm_solution):
    n = bm_solution.prices.n
    x_star = bm_solution.prices.x_star
    ok = abs(n - 0.625) <= 1e-12 and abs(x_star - 1.9) <= 1e-12
    report(1, ok, f"n={n!r}, x_star={x_star!r} (tol 1e-12)")


@pytest.fixture(scope="module")
def ode_grid(ou_solution):
    return np.linspace(-2.0, ou_solution.prices.x0 + 1.0, 200)


def test_criterion_02_psi_ode_residuals(ou_solution, ode_grid):
    p = OU_PARAMS
    worst = 0.0
    for x in ode_grid:
        ev = psi_eval(float(x), p, ou_solution.spec)
        for k in (0, 1):
            resid = abs(
                0.5 * p.sigma**2 * ev.value(k + 2)
                + (p.a - p.b * x) * ev.value(k + 1)
                - (p.rho + k * p.b) * ev.value(k)
            )
            worst = max(worst, resid / ev.value(k))
    report(2, worst <= 1e-8, f"max relative ODE residual {worst:.3e} (tol 1e-8)")


def test_criterion_03_convexity_and_orderings(ou_solution, ode_grid):
    p = OU_PARAMS
    wron_ok = True
    for x in ode_grid:
        ev = psi_eval(float(x), p, ou_solution.spec)
        for k in (0, 1):
            wron_ok &= ev.value(k + 2) * ev.value(k) - ev.value(k + 1) ** 2 > 0.0
    cp = ou_solution.prices
    order_ok = p.c < cp.x_inf < cp.x0
    xbar_ok = abs(cp.x_bar - 0.5125 / 1.375) <= 1e-15 and cp.x_bar < cp.x0
    report(
        3,
        wron_ok and order_ok and xbar_ok,
        f"wronskian>0 on 200 pts; c<x_inf<x0 ({cp.x_inf:.6f}<{cp.x0:.6f}); "
        f"x_bar={cp.x_bar:.12f}<x0",
    )


def test_criterion_04_free_boundary_properties(ou_solution):
    tab, cp = ou_solution.table, ou_solution.prices
    delta = cp.x0 - cp.x_inf
    zero_ok = float(tab.F(cp.x0)) == 0.0 and tab.f_values[-1] == 0.0
    dec_ok = bool(np.all(np.diff(tab.f_values) < 0.0))
    near = float(tab.F(cp.x_inf + 1e-3 * delta))
    mid = float(tab.F(cp.x_inf + 0.5 * delta))
    div_ok = near > 10.0 * mid
    rt_worst = 0.0
    for y in np.geomspace(1e-4, 0.95 * tab.f_max, 25):
        rt_worst = max(
            rt_worst, abs(float(tab.F(tab.F_inverse(float(y)))) - float(y))
        )
    rt_ok = rt_worst <= 1e-8
    report(
        4,
        zero_ok and dec_ok and div_ok and rt_ok,
        f"F(x0)=0; strictly decreasing; F(near)/F(mid)={near / mid:.2f}>10; "
        f"round-trip max {rt_worst:.2e} (tol 1e-8)",
    )


def test_criterion_05_lump_size_equation(ou_solution):
    tab, cp = ou_solution.table, ou_solution.prices
    p = OU_PARAMS
    rng = np.random.default_rng(20240810)
    worst = 0.0
    count = 0
    brackets_ok = True
    while count < 1000:
        y = float(np.exp(rng.uniform(np.log(1e-3), np.log(0.9 * tab.f_max))))
        thr = tab.F_inverse(y)
        hi = cp.x0 + p.alpha * y * 0.999
        if hi <= thr:
            continue
        x = float(rng.uniform(thr, hi))
        if ou_solution.region(x, y).value != "sell2":
            continue
        resid = lambda zz: y - zz - float(tab.F(x - p.alpha * zz))
        lo = max(0.0, (x - cp.x0) / p.alpha)
        up = min(y, (x - cp.x_inf) / p.alpha * (1 - 1e-12))
        brackets_ok &= resid(lo) >= 0.0 >= resid(up)
        z = solve_z(x, y, p, tab)
        worst = max(worst, abs(resid(z)))
        count += 1
    edge_worst = 0.0
    for frac in np.linspace(0.15, 0.85, 20):
        x = cp.x_inf + frac * (cp.x0 - cp.x_inf)
        edge_worst = max(edge_worst, abs(solve_z(x, float(tab.F(x)), p, tab)))
    for x in np.linspace(cp.x0 + 0.1, cp.x0 + 2.0, 10):
        seam_y = (x - cp.x0) / p.alpha
        edge_worst = max(edge_worst, abs(solve_z(x, seam_y, p, tab) - seam_y))
    ok = worst <= 1e-9 and edge_worst <= 1e-8 and brackets_ok
    report(
        5,
        ok,
        f"1000 random interior residuals max {worst:.2e} (tol 1e-9), "
        f"brackets sign-valid {brackets_ok}; "
        f"edge cases max {edge_worst:.2e} (tol 1e-8)",
    )


def _one_sided_partials(sol, xb, y, side, h=2e-3, eps=1e-7, ky=2e-3):
    """Third-order one-sided difference estimates of (w_x, w_xx, w_y) at the
    boundary point, using only values of w from the chosen side."""
    s = 1.0 if side == "right" else -1.0
    w = sol.value
    f = [w(xb + i * s * h, y) for i in range(5)]
    wx = s * (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h)
    wxx = (35 * f[0] - 104 * f[1] + 114 * f[2] - 56 * f[3] + 11 * f[4]) / (
        12 * h**2
    )
    sy = 1.0 if side == "right" else -1.0  # move y into the same region
    g = [w(xb + s * eps, y + i * sy * ky) for i in range(4)]
    wy = sy * (-11 * g[0] + 18 * g[1] - 9 * g[2] + 2 * g[3]) / (6 * ky)
    return wx, wxx, wy


def _smooth_fit_worst(sol, boundary_points):
    worst = 0.0
    for xb, y in boundary_points:
        left = _one_sided_partials(sol, xb, y, "left")
        right = _one_sided_partials(sol, xb, y, "right")
        for lv, rv in zip(left, right):
            worst = max(worst, abs(lv - rv) / max(abs(lv), abs(rv), 1e-12))
    return worst


def test_criterion_06_smooth_fit(ou_solution, bm_solution):
    ys = np.geomspace(0.05, 10.0, 50)
    ou_points = [(ou_solution.table.F_inverse(float(y)), float(y)) for y in ys]
    worst_ou = _smooth_fit_worst(ou_solution, ou_points)
    bm_points = [(bm_solution.prices.x_star, float(y)) for y in ys]
    worst_bm = _smooth_fit_worst(bm_solution, bm_points)
    ok = worst_ou <= 1e-4 and worst_bm <= 1e-4
    report(
        6,
        ok,
        f"one-sided partials mismatch across 50 boundary points: "
        f"ou {worst_ou:.2e}, bm {worst_bm:.2e} (tol 1e-4)",
    )


def test_criterion_07_hjb_suite(ou_solution, bm_solution):
    details = []
    ok = True
    for sol, tag, seed in ((ou_solution, "ou", 100), (bm_solution, "bm", 200)):
        states = sample_region_states(sol, "waiting", 2000, seed)
        states += sample_region_states(sol, "sell2", 2000, seed + 1)
        states += sample_region_states(sol, "sell1", 2000, seed + 2)
        rep = hjb_residuals(states, sol, interior_tol=1e-7, constraint_tol=1e-8)
        s = rep.summary()
        ok &= rep.passed
        w_stats = s["regions"]["waiting"]
        details.append(
            f"{tag}: {len(states)} states, "
            f"max|Lw-rw| on W {w_stats['max_abs_generator']:.1e}, "
            f"max W slack {w_stats['max_slack']:.1e}, "
            f"failures {sum(r['failures'] for r in s['regions'].values())}"
        )
    report(7, ok, "; ".join(details))


MC_CFG = dict(step=1e-3, n_paths=100_000, base_seed=20_240_810)


@pytest.fixture(scope="module")
def ou_mc_states(ou_solution):
    cp = ou_solution.prices
    return [
        (0.4, 2.0),                        # deep waiting
        (0.5, 1.0),                        # waiting
        (cp.x0 + 0.3, 2.0),                # lump-extraction region
        (cp.x0 + 0.5, 1.0),                # immediate depletion region
        (ou_solution.threshold(1.0), 1.0), # on the boundary
    ]


@pytest.fixture(scope="module")
def bm_mc_states(bm_solution):
    return [(1.0, 5.0), (1.5, 2.0), (2.5, 4.0), (3.0, 2.0), (1.9, 1.0)]


def test_criterion_08_monte_carlo_vs_analytic(
    ou_solution, bm_solution, ou_mc_states, bm_mc_states
):
    lines = []
    ok = True
    for sol, states, kind in (
        (ou_solution, ou_mc_states, "optimal_ou"),
        (bm_solution, bm_mc_states, "optimal_bm"),
    ):
        cfg = SimConfig(policy=Policy(kind), horizon=10.0 / sol.params.rho, **MC_CFG)
        results = simulate_payoff_many(states, sol, cfg)
        for (x, y), r in zip(states, results):
            w = sol.value(x, y)
            tol = max(2.0 * r.std_error, 0.02 * abs(w))
            good = abs(r.mean - w) <= tol
            ok &= good
            lines.append(
                f"{kind}({x:.3f},{y}): |{r.mean:.5f}-{w:.5f}|="
                f"{abs(r.mean - w):.1e}<= {tol:.1e} {'ok' if good else 'BAD'}"
            )
    report(8, ok, "; ".join(lines))


def test_criterion_09_policy_dominance(
    ou_solution, bm_solution, ou_mc_states, bm_mc_states
):
    ok = True
    lines = []
    for sol, states, kind in (
        (ou_solution, ou_mc_states, "optimal_ou"),
        (bm_solution, bm_mc_states, "optimal_bm"),
    ):
        if sol.branch == "ou":
            scale = sol.prices.x0 - sol.prices.x_inf
        else:
            scale = sol.prices.x_star - sol.params.c
        shifts = [0.05 * scale, -0.05 * scale]
        cfg = SimConfig(
            policy=Policy(kind),
            horizon=10.0 / sol.params.rho,
            step=1e-3,
            n_paths=20_000,
            base_seed=20_240_811,
        )
        for x, y in states:
            rep = dominance_test(x, y, sol, cfg, shifts)
            ok &= rep.passed
            if not rep.passed:
                lines.append(f"{kind}({x:.3f},{y}): {rep.rows}")
            if sol.region(x, y).value == "waiting":
                dep = [r for r in rep.rows if r[0] == "immediate_depletion"][0]
                strictly = dep[2] > 2.0 * dep[3]
                ok &= strictly
                lines.append(
                    f"{kind}({x:.3f},{y}) depletion loses by {dep[2]:.4f}"
                    f">{2 * dep[3]:.4f}"
                )
    report(9, ok, "; ".join(lines) or "all shifts within 2 paired SE")


def test_criterion_10_qvi_oracle(ou_solution, bm_solution):
    ok = True
    lines = []
    sups = {}
    for sol, tol, tag in ((ou_solution, 0.03, "ou"), (bm_solution, 0.02, "bm")):
        seq = []
        for nx, ny in ((100, 15), (200, 30), (400, 60)):
            rep = compare(solve_qvi(sol, default_grid(sol, nx=nx, ny=ny)), sol)
            seq.append(rep.sup_rel)
            if (nx, ny) == (400, 60):
                ok &= rep.sup_rel <= tol and rep.envelope_max_cells <= 2.0
                lines.append(
                    f"{tag}: sup_rel={rep.sup_rel:.5f} (tol {tol}), "
                    f"envelope={rep.envelope_max_cells:.2f} cells"
                )
        sups[tag] = seq
        ok &= seq[0] > seq[1] > seq[2]
        lines.append(f"{tag} refinement {['%.1e' % s for s in seq]}")
    report(10, ok, "; ".join(lines))


def test_criterion_11_comparative_statics(ou_solution):
    base = OU_PARAMS
    lines = []
    ok = True

    def build(**over):
        kwargs = vars(base).copy()
        kwargs.update(over)
        return Solution.build(ModelParams(**kwargs), n_nodes=48)

    # drift-level sweep
    a_vals = [0.4, 0.5, 0.6, 0.7]
    a_sols = [ou_solution] + [build(a=v) for v in a_vals[1:]]
    sig_vals = [0.8, 0.9, 1.0, 1.1]
    sig_sols = [ou_solution] + [build(sigma=v) for v in sig_vals[1:]]
    for label, vals, sols in (("a", a_vals, a_sols), ("sigma", sig_vals, sig_sols)):
        x0s = [s.prices.x0 for s in sols]
        xis = [s.prices.x_inf for s in sols]
        mono = all(b > a_ for a_, b in zip(x0s, x0s[1:])) and all(
            b > a_ for a_, b in zip(xis, xis[1:])
        )
        stars = [
            x_star_bm(ModelParams(**{**vars(base), "b": 0.0, label: v}))
            for v in vals
        ]
        mono_star = all(b > a_ for a_, b in zip(stars, stars[1:]))
        lo = max(s.prices.x_inf for s in sols) + 1e-3
        hi = min(s.prices.x0 for s in sols) - 1e-3
        xs = np.linspace(lo, hi, 41)
        fs = [np.asarray(s.table.F(xs)) for s in sols]
        point = all(bool(np.all(fb > fa)) for fa, fb in zip(fs, fs[1:]))
        ok &= mono and mono_star and point
        lines.append(
            f"{label}-sweep: x0/x_inf increasing={mono}, "
            f"x_star increasing={mono_star}, F pointwise increasing={point}"
        )

    # every solved instance keeps x_bar strictly below x0
    xbar_ok = all(
        s.prices.x_bar < s.prices.x0 for s in a_sols + sig_sols
    )
    ok &= xbar_ok
    lines.append(f"x_bar<x0 on all instances={xbar_ok}")

    # mean-reversion-speed sweep: boundary rises toward the b=0 barrier
    b_vals = [1.0, 0.25, 0.125, 0.05]
    b_sols = [ou_solution] + [build(b=v) for v in b_vals[1:]]
    ys = np.geomspace(0.05, 2.0, 25)
    curves = [
        np.array([s.table.F_inverse(float(y)) for y in ys]) for s in b_sols
    ]
    rising = all(bool(np.all(cb > ca)) for ca, cb in zip(curves, curves[1:]))
    x_star = 1.9
    sup_d = [float(np.max(np.abs(c - x_star))) for c in curves]
    shrink = all(d1 > d2 for d1, d2 in zip(sup_d, sup_d[1:]))
    ok &= rising and shrink
    lines.append(
        f"b-sweep: boundary increasing as b falls={rising}, "
        f"sup-distance to x*=1.9 {['%.3f' % d for d in sup_d]} decreasing={shrink}"
    )
    report(11, ok, "; ".join(lines))


def test_criterion_12_stopping_representation(ou_solution, bm_solution):
    gap = 0.0
    for x in (-0.5, 0.8, 1.4, 1.89):
        for y1, y2 in ((0.3, 2.0), (1.0, 8.0)):
            gap = max(
                gap,
                abs(
                    stopping_value(x, y1, bm_solution)
                    - stopping_value(x, y2, bm_solution)
                ),
            )
    bm_ok = gap <= 1e-10
    lines = [f"bm reserve-independence gap {gap:.1e} (tol 1e-10)"]
    states = [(0.4, 1.0), (0.6, 2.0), (0.2, 0.5), (0.7, 1.5), (0.5, 3.0)]
    cfg = SimConfig(
        step=1e-3,
        horizon=10.0 / OU_PARAMS.rho,
        n_paths=20_000,
        base_seed=20_240_812,
    )
    mc_ok = True
    for x, y in states:
        u = stopping_value(x, y, ou_solution)
        r = simulate_stopping_payoff(x, y, ou_solution, cfg)
        good = abs(r.mean - u) <= 2.0 * r.std_error
        mc_ok &= good
        lines.append(
            f"({x},{y}): |{r.mean:.5f}-{u:.5f}|/2SE="
            f"{abs(r.mean - u) / (2 * r.std_error):.2f} {'ok' if good else 'BAD'}"
        )
    report(12, bm_ok and mc_ok, "; ".join(lines))
