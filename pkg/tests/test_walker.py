# ABOUTME: Unit tests for quenched walks, hitting times and backtracking tails.
# ABOUTME: Oracles: v_P for the speed, n / v_P for hitting times, rho^k ruin bound for backtracks.

import numpy as np
import pytest

from rwre_lab.environment import Environment, discrete, omega_grid
from rwre_lab.rng import SeedMode, Stream, uniforms
from rwre_lab.walker import (
    backtrack_tail,
    empirical_speed,
    hitting_time,
    hitting_times,
    run_walk,
    run_walks,
    simulate_walks,
)


class TestRunWalk:
    """Tests for run_walk / run_walks"""

    def test_zero_steps(self, nestling_env):
        """n = 0 leaves the walk at its start"""
        result = run_walk(nestling_env, start=5, n=0, walk_seed=1)
        assert result.final_position == 5
        assert result.displacement == 0

    def test_deterministic(self, nestling_env):
        a = run_walk(nestling_env, 0, 500, walk_seed=3, keep_path=True)
        b = run_walk(nestling_env, 0, 500, walk_seed=3, keep_path=True)
        np.testing.assert_array_equal(a.path, b.path)

    def test_path_is_nearest_neighbor(self, nestling_env):
        """Every step moves exactly one site; summaries agree with the path"""
        r = run_walk(nestling_env, 10, 1000, walk_seed=9, keep_path=True)
        assert len(r.path) == 1001
        assert np.all(np.abs(np.diff(r.path)) == 1)
        assert r.min_position == r.path.min()
        assert r.final_position == r.path[-1]
        drawdown = np.max(np.maximum.accumulate(r.path) - r.path)
        assert r.max_backtrack == drawdown

    def test_parity(self, nestling_env):
        """After n steps X_n - start has the parity of n"""
        batch = run_walks(nestling_env, [0] * 50, 101, walk_seeds=np.arange(50))
        assert np.all(batch.displacement % 2 == 1)

    def test_first_step_uses_keyed_variate(self, constant_env):
        """Step 0 goes right iff u(seed, 0) < omega"""
        for seed in range(20):
            r = run_walk(constant_env, 0, 1, seed)
            expected = 1 if uniforms(Stream.WALK, seed, 0) < 0.75 else -1
            assert r.final_position == expected

    def test_constant_speed(self, constant_env):
        """Mean X_n / n is 1/2 within 0.01 (200 walks of 2*10^4 steps)"""
        batch = run_walks(constant_env, [0] * 200, 20_000, walk_seeds=np.arange(200))
        mean, se = empirical_speed(batch)
        assert abs(mean - 0.5) < 0.01
        assert se < 0.002

    def test_nestling_speed(self, nestling_spec):
        """Mean X_n / n is 3/13 within 0.025 (400 environments, one walk of 5000 steps each)"""
        n, walks = 5000, 400
        omega = omega_grid(nestling_spec, np.arange(walks), -n, n)
        batch = simulate_walks(
            omega, -n, np.zeros(walks, dtype=np.int64), n, np.arange(walks), rows=np.arange(walks)
        )
        mean, _ = empirical_speed(batch)
        assert abs(mean - 3.0 / 13.0) < 0.025

    def test_two_dimensional_table(self, nestling_spec):
        """Walks indexed into an environment table by row"""
        omega = omega_grid(nestling_spec, [1, 2], -50, 50)
        batch = simulate_walks(omega, -50, np.zeros(2, dtype=np.int64), 50, [4, 4], rows=np.array([0, 1]))
        single = run_walk(Environment(nestling_spec, 2), 0, 50, 4)
        assert batch.final[1] == single.final_position

    def test_negative_steps(self, constant_env):
        with pytest.raises(ValueError, match="n must be >= 0"):
            run_walk(constant_env, 0, -1, 0)


class TestHittingTime:
    """Tests for hitting_time"""

    def test_minimal_crossing(self, constant_env):
        """x = 1 with a rightward first step hits at time 1"""
        seed = next(s for s in range(100) if uniforms(Stream.WALK, s, 0) < 0.75)
        result = hitting_time(constant_env, 0, 1, cap=10, walk_seed=seed)
        assert result.hit
        assert result.time == 1

    def test_censored(self, constant_env):
        """x = cap = 10 with a leftward first step cannot make it"""
        seed = next(s for s in range(100) if uniforms(Stream.WALK, s, 0) >= 0.75)
        result = hitting_time(constant_env, 0, 10, cap=10, walk_seed=seed)
        assert result.censored
        assert result.time is None
        assert result.cap == 10

    def test_mean_hitting_time(self, constant_env):
        """E T_x = x / v_P = 2x within 3% (x = 2000, 200 walks)"""
        times = hitting_times(constant_env, [0] * 200, 2000, cap=100_000, walk_seeds=np.arange(200))
        assert np.all(times > 0)
        assert times.mean() == pytest.approx(4000, rel=0.03)

    def test_hitting_parity(self, nestling_env):
        """T_x has the parity of x"""
        times = hitting_times(nestling_env, [0] * 30, 7, cap=10_000, walk_seeds=np.arange(30))
        assert np.all(times[times > 0] % 2 == 1)

    def test_invalid_arguments(self, constant_env):
        with pytest.raises(ValueError, match="distance"):
            hitting_time(constant_env, 0, 0, 10, 0)
        with pytest.raises(ValueError, match="cap"):
            hitting_time(constant_env, 0, 5, 4, 0)


class TestBacktrackTail:
    """Tests for backtrack_tail"""

    def test_tail_starts_at_one_and_decreases(self, nestling_env):
        tail = backtrack_tail(nestling_env, [0, 10], horizon=300, replicas=200, seed=1)
        assert tail.at(0) == 1.0
        assert np.all(np.diff(tail.tail) <= 0)
        assert tail.samples == 400

    def test_gamblers_ruin_bound(self, constant_env):
        """P(fall k below start) <= (1/3)^k within 4 standard errors"""
        tail = backtrack_tail(constant_env, [0], horizon=2000, replicas=4000, seed=2, k_max=6)
        for k in range(1, 7):
            bound = (1.0 / 3.0) ** k
            assert tail.at(k) <= bound + 4 * np.sqrt(bound * (1 - bound) / tail.samples)

    def test_drawdown_dominates_below_start(self, nestling_env):
        """The drawdown is at least the fall below the start"""
        below = backtrack_tail(nestling_env, [0], 500, 300, seed=5, k_max=8)
        draw = backtrack_tail(nestling_env, [0], 500, 300, seed=5, measure="drawdown", k_max=8)
        assert np.all(draw.tail >= below.tail)

    def test_averaged_mode(self, nestling_env):
        """Averaged mode draws a fresh environment per replica"""
        tail = backtrack_tail(nestling_env, [0], 200, 100, seed=3, mode=SeedMode.AVERAGED)
        assert tail.at(0) == 1.0
        assert tail.measure == "below_start"

    def test_unknown_measure(self, constant_env):
        with pytest.raises(ValueError, match="unknown backtrack measure"):
            backtrack_tail(constant_env, [0], 10, 10, seed=0, measure="depth")

    def test_beyond_k_max(self):
        env = Environment(discrete([(0.75, 1.0)]), 0)
        tail = backtrack_tail(env, [0], 50, 10, seed=0, k_max=3)
        assert tail.at(10) == 0.0
