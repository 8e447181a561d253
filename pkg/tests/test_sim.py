import math

import numpy as np
import pytest

from optext import (
    ConfigError,
    Policy,
    SimConfig,
    dominance_test,
    initial_jump,
    running_max_policy_bm,
    simulate_payoff,
    simulate_payoff_many,
    simulate_stopping_payoff,
)
from optext.sim import _per_path_payoffs, _simulate_bm, _simulate_ou

from conftest import BM_PARAMS, OU_PARAMS


def quick_cfg(policy, **kw):
    base = dict(step=2e-3, horizon=8.0, n_paths=2_000, base_seed=321, policy=policy)
    base.update(kw)
    return SimConfig(**base)


class TestConfig:
    def test_policy_validation(self):
        with pytest.raises(ConfigError):
            Policy("nonsense")
        with pytest.raises(ConfigError):
            Policy("optimal_ou", shift=0.3)

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            SimConfig(step=0.0)
        with pytest.raises(ConfigError):
            SimConfig(n_paths=0)

    def test_branch_mismatch(self, bm_solution):
        with pytest.raises(ConfigError):
            simulate_payoff(
                1.0, 1.0, bm_solution, quick_cfg(Policy("optimal_ou"))
            )


class TestDegenerate:
    def test_zero_reserve_exact_zero(self, bm_solution):
        r = simulate_payoff(1.0, 0.0, bm_solution, quick_cfg(Policy("optimal_bm")))
        assert r.mean == 0.0 and r.std_error == 0.0

    def test_no_extraction_zero(self, ou_solution):
        r = simulate_payoff(
            1.0, 2.0, ou_solution, quick_cfg(Policy("no_extraction"))
        )
        assert r.mean == 0.0 and r.std_error == 0.0

    def test_immediate_depletion_deterministic(self, ou_solution):
        x, y = 0.6, 1.5
        r = simulate_payoff(
            x, y, ou_solution, quick_cfg(Policy("immediate_depletion"))
        )
        expect = (x - OU_PARAMS.c) * y - 0.5 * OU_PARAMS.alpha * y * y
        assert r.mean == pytest.approx(expect, rel=1e-14)
        assert r.std_error == 0.0 and r.depleted_fraction == 1.0

    def test_sell1_start_recovers_value_exactly(self, bm_solution):
        x, y = 3.0, 2.0
        r = simulate_payoff(x, y, bm_solution, quick_cfg(Policy("optimal_bm")))
        assert r.mean == pytest.approx(bm_solution.value(x, y), rel=1e-14)
        assert r.std_error == 0.0
        assert r.initial_jump == pytest.approx(y)


class TestInitialJump:
    def test_waiting_zero(self, ou_solution):
        assert initial_jump(0.4, 1.0, ou_solution) == 0.0

    def test_sell1_full(self, ou_solution):
        cp = ou_solution.prices
        assert initial_jump(cp.x0 + 1.0, 0.5, ou_solution) == 0.5

    def test_sell2_lands_on_boundary(self, ou_solution):
        cp, tab = ou_solution.prices, ou_solution.table
        x, y = cp.x0 + 0.4, 3.0
        d = initial_jump(x, y, ou_solution)
        assert abs(
            (y - d) - float(tab.F(x - OU_PARAMS.alpha * d))
        ) <= 1e-9

    def test_bm_jump(self, bm_solution):
        xs = bm_solution.prices.x_star
        assert initial_jump(xs + 1.0, 9.0, bm_solution) == pytest.approx(
            1.0 / BM_PARAMS.alpha
        )


class TestRunningMaxPolicy:
    def test_never_triggered_stays_zero(self):
        rng = np.random.default_rng(5)
        incr = rng.standard_normal(500)
        # start far below the barrier with a barrier too high to reach
        xi = running_max_policy_bm(0.0, BM_PARAMS, incr, 5.0, 1e-3, barrier=50.0)
        assert np.all(xi == 0.0)

    def test_initial_lump(self):
        incr = np.zeros(10)
        xi = running_max_policy_bm(2.5, BM_PARAMS, incr, 5.0, 1e-3)
        assert xi[0] == pytest.approx((2.5 - 1.9) / BM_PARAMS.alpha)

    def test_monotone_capped_and_barrier_respected(self):
        rng = np.random.default_rng(6)
        incr = rng.standard_normal(4000)
        h = 1e-3
        x, y = 1.7, 0.8
        xi = running_max_policy_bm(x, BM_PARAMS, incr, y, h)
        assert np.all(np.diff(xi) >= 0.0)
        assert xi.max() <= y + 1e-15
        w = np.concatenate(
            [[0.0], np.cumsum(incr) * BM_PARAMS.sigma * math.sqrt(h)]
        )
        t = h * np.arange(xi.shape[0])
        x_ctrl = x + BM_PARAMS.a * t + w - BM_PARAMS.alpha * xi
        live = xi < y
        assert np.max(x_ctrl[live] - 1.9) <= 1e-12


class TestEngineConsistency:
    def test_bm_fast_matches_reference(self, bm_solution):
        cfg = quick_cfg(Policy("optimal_bm"), n_paths=300)
        fast = _per_path_payoffs(bm_solution, 1.5, 2.0, cfg)[0]
        ref = _simulate_bm(
            bm_solution, bm_solution.prices.x_star, 1.5, 2.0, cfg, None
        )[0]
        assert np.allclose(fast, ref, rtol=1e-11, atol=1e-13)

    def test_ou_fast_matches_reference(self, ou_solution):
        cfg = quick_cfg(Policy("optimal_ou"), n_paths=300)
        fast = _per_path_payoffs(ou_solution, 0.95, 1.5, cfg)[0]
        ref = _simulate_ou(ou_solution, ou_solution.table, 0.95, 1.5, cfg, None)[0]
        assert np.allclose(fast, ref, rtol=1e-11, atol=1e-13)

    def test_bit_identical_across_blocking(self, ou_solution):
        cfg_a = quick_cfg(Policy("optimal_ou"), n_paths=600, block_size=100)
        cfg_b = quick_cfg(
            Policy("optimal_ou"), n_paths=600, block_size=600, chunk_steps=77
        )
        ra = simulate_payoff(0.8, 1.2, ou_solution, cfg_a)
        rb = simulate_payoff(0.8, 1.2, ou_solution, cfg_b)
        assert ra.mean == rb.mean and ra.std_error == rb.std_error

    def test_batch_identical_to_single(self, ou_solution):
        cfg = quick_cfg(Policy("optimal_ou"), n_paths=400)
        states = [(0.5, 1.0), (0.9, 2.0)]
        batch = simulate_payoff_many(states, ou_solution, cfg)
        for (x, y), rb in zip(states, batch):
            assert simulate_payoff(x, y, ou_solution, cfg).mean == rb.mean


class TestFeasibilityAndAccuracy:
    def test_pathwise_feasibility_from_trace(self, ou_solution, tmp_path):
        trace = tmp_path / "trace.csv"
        cfg = SimConfig(
            step=5e-3,
            horizon=2.0,
            n_paths=8,
            base_seed=5,
            policy=Policy("optimal_ou"),
        )
        simulate_payoff(0.9, 1.2, ou_solution, cfg, trace_file=str(trace))
        rows = np.loadtxt(trace, delimiter=",", skiprows=2)
        for pid in range(8):
            sub = rows[rows[:, 0] == pid]
            xi = sub[:, 4]
            y_col = sub[:, 3]
            assert np.all(np.diff(xi) >= -1e-12)  # cumulative extraction grows
            assert xi.max() <= 1.2 + 1e-12
            assert np.all(y_col >= -1e-12)

    def test_state_constraint_with_slack(self, ou_solution, tmp_path):
        trace = tmp_path / "trace.csv"
        h = 5e-3
        cfg = SimConfig(
            step=h, horizon=2.0, n_paths=8, base_seed=6, policy=Policy("optimal_ou")
        )
        simulate_payoff(0.9, 1.5, ou_solution, cfg, trace_file=str(trace))
        rows = np.loadtxt(trace, delimiter=",", skiprows=2)
        slack = 6.0 * OU_PARAMS.sigma * math.sqrt(h)
        for pid in range(8):
            sub = rows[rows[:, 0] == pid]
            live = sub[:, 3] > 0
            bounds = np.array(
                [ou_solution.threshold(float(yv)) for yv in sub[live, 3]]
            )
            assert np.all(sub[live, 2] <= bounds + slack)

    def test_bm_mean_matches_value(self, bm_solution):
        cfg = SimConfig(
            step=1e-3, horizon=12.0, n_paths=20_000, base_seed=17,
            policy=Policy("optimal_bm"),
        )
        r = simulate_payoff(1.5, 2.0, bm_solution, cfg)
        w = bm_solution.value(1.5, 2.0)
        assert abs(r.mean - w) <= max(3.0 * r.std_error, 0.02 * w)

    def test_step_refinement_consistent(self, ou_solution):
        base = dict(horizon=6.0, n_paths=8_000, base_seed=23,
                    policy=Policy("optimal_ou"))
        r_coarse = simulate_payoff(
            0.8, 1.0, ou_solution, SimConfig(step=4e-3, **base)
        )
        r_fine = simulate_payoff(
            0.8, 1.0, ou_solution, SimConfig(step=2e-3, **base)
        )
        combined = math.hypot(r_coarse.std_error, r_fine.std_error)
        assert abs(r_coarse.mean - r_fine.mean) <= 2.0 * combined + 1e-3

    def test_tail_bound_reported(self, ou_solution):
        r = simulate_payoff(
            0.5, 1.0, ou_solution, quick_cfg(Policy("optimal_ou"), horizon=3.0)
        )
        assert r.tail_bound >= 0.0 and math.isfinite(r.tail_bound)


class TestDominance:
    def test_rejects_zero_shift(self, ou_solution):
        with pytest.raises(ConfigError):
            dominance_test(
                0.5, 1.0, ou_solution, quick_cfg(Policy("optimal_ou")), [0.0]
            )

    def test_small_scale_dominance(self, ou_solution):
        delta = ou_solution.prices.x0 - ou_solution.prices.x_inf
        cfg = SimConfig(
            step=1e-3, horizon=8.0, n_paths=4_000, base_seed=29,
            policy=Policy("optimal_ou"),
        )
        rep = dominance_test(
            0.5, 1.0, ou_solution, cfg, [0.05 * delta, -0.05 * delta]
        )
        assert rep.passed, rep.rows
        labels = [r[0] for r in rep.rows]
        assert "immediate_depletion" in labels


class TestStoppingPayoff:
    def test_in_region_is_immediate(self, ou_solution):
        cp = ou_solution.prices
        r = simulate_stopping_payoff(
            cp.x0 + 0.2, 1.0, ou_solution, quick_cfg(Policy("optimal_ou"))
        )
        assert r.mean == pytest.approx(cp.x0 + 0.2 - OU_PARAMS.c)
        assert r.std_error == 0.0

    def test_bm_matches_analytic(self, bm_solution):
        from optext import stopping_value

        cfg = SimConfig(step=1e-3, horizon=14.0, n_paths=8_000, base_seed=31)
        u = stopping_value(1.2, 2.0, bm_solution)
        r = simulate_stopping_payoff(1.2, 2.0, bm_solution, cfg)
        assert abs(r.mean - u) <= 3.0 * r.std_error
