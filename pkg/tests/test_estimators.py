# ABOUTME: Unit tests for the statistical estimators: intervals, speeds, tails, Poisson fit and TV distance.
# ABOUTME: Uses the constant environment wherever a closed form exists; bands are 4 sigma or wider.

import math
import time

import numpy as np
import pytest
from scipy.stats import poisson

from rwre_lab import estimators
from rwre_lab.environment import Environment, compute_f
from rwre_lab.errors import DegenerateEstimate, InsufficientSamples
from rwre_lab.estimators import (
    convergence_tv,
    estimate_probability,
    hitting_tail,
    hydro_transport_error,
    mean_preservation,
    poisson_gof,
    slowdown_probability,
    slowdown_scaling,
    speed_estimate,
    stationarity_check,
    transport_target,
    tv_distance_to_poisson,
    uniform_lln_deviation,
    wilson_interval,
)
from rwre_lab.particles import DeterministicConstant, Indicator, triangle
from rwre_lab.rng import SeedMode, SeedPolicy, uniforms
from rwre_lab.window import Window


def quenched(replicas, master=0):
    return SeedPolicy(SeedMode.QUENCHED, replicas, master)


def averaged(replicas, master=0):
    return SeedPolicy(SeedMode.AVERAGED, replicas, master)


class TestProbabilityEstimates:
    """Tests for wilson_interval / estimate_probability"""

    def test_wilson_half(self):
        lo, hi = wilson_interval(5, 10)
        assert lo == pytest.approx(0.2366, abs=1e-4)
        assert hi == pytest.approx(0.7634, abs=1e-4)

    def test_wilson_all_successes(self):
        lo, hi = wilson_interval(10, 10)
        assert hi == 1.0
        assert lo < 1.0

    def test_zero_successes_is_one_sided(self):
        """No successes gives [0, 3 / trials] and a degenerate flag"""
        est = estimate_probability(0, 300)
        assert est.degenerate
        assert (est.ci_low, est.ci_high) == (0.0, 0.01)

    def test_strict_zero_successes(self):
        with pytest.raises(DegenerateEstimate, match="no event in 50 trials"):
            estimate_probability(0, 50, strict=True)

    def test_no_trials(self):
        with pytest.raises(ValueError):
            wilson_interval(0, 0)


class TestWalkEstimators:
    """Tests for speed, LLN, slowdown and hitting-tail estimators"""

    def test_speed_constant(self, constant_spec):
        """Averaged X_n / n over 200 replicas matches 1/2 within 4 standard errors"""
        est = speed_estimate(constant_spec, 1000, averaged(200))
        assert est.speed == pytest.approx(0.5)
        assert est.z_score < 4.0
        assert est.to_dict()["replicas"] == 200

    def test_lln_singleton(self, constant_env):
        """One walk of one step: deviation is |X_1 - 1/2|"""
        dev = uniform_lln_deviation(constant_env, 0.0, 1.0, 1)
        assert dev.walks == 1
        assert dev.max_deviation in (0.5, 1.5)

    def test_lln_constant(self, constant_env):
        """2000 walks of 1000 steps stay within 0.15 of the speed"""
        dev = uniform_lln_deviation(constant_env, 0.0, 1.0, 1000, particles_per_site=2, seed=3)
        assert dev.walks == 2000
        assert dev.max_deviation < 0.15
        assert dev.implied_gamma == pytest.approx(math.log(2) / math.log(1000))

    def test_lln_family_monotone(self, constant_env):
        """Adding walks to the family cannot lower the maximum"""
        small = uniform_lln_deviation(constant_env, 0.0, 1.0, 200, particles_per_site=1, seed=5)
        large = uniform_lln_deviation(constant_env, 0.0, 1.0, 200, particles_per_site=3, seed=5)
        assert large.max_deviation >= small.max_deviation

    def test_lln_bad_range(self, constant_env):
        with pytest.raises(ValueError, match="A < B"):
            uniform_lln_deviation(constant_env, 1.0, 1.0, 10)

    def test_slowdown_certain(self, constant_spec):
        """v >= 1 is met by every walk"""
        est = slowdown_probability(constant_spec, 1.0, 50, quenched(20))
        assert est.estimate.p_hat == 1.0
        assert est.estimate.ci_high == 1.0

    def test_slowdown_degenerate(self, constant_spec):
        """Constant p = 3/4 walks essentially never go backwards over 400 steps"""
        est = slowdown_probability(constant_spec, -0.2, 400, quenched(50))
        assert est.estimate.degenerate
        with pytest.raises(DegenerateEstimate):
            slowdown_probability(constant_spec, -0.2, 400, quenched(50), strict=True)

    def test_slowdown_family_contains_origin_walk(self, constant_spec):
        """The origin walk is one member of the family, so the union event is at least as frequent"""
        single = slowdown_probability(constant_spec, 0.4, 40, quenched(200, master=3))
        family = slowdown_probability(
            constant_spec, 0.4, 40, quenched(200, master=3), starts=[-5, 0, 5], particles_per_site=2,
        )
        assert family.estimate.p_hat >= single.estimate.p_hat
        assert family.estimate.p_hat > 0.0

    def test_slowdown_scaling_nestling(self, nestling_spec):
        """Averaged slowdown probabilities at v = v_P / 2 fall with n"""
        diag = slowdown_scaling(nestling_spec, 0.115, [50, 400], averaged(2000, master=1))
        first, last = diag.estimates
        assert last.estimate.p_hat < first.estimate.p_hat
        assert diag.reference_exponent == pytest.approx(1.0 - 2.94, abs=0.02)

    def test_hitting_tail_censored(self, constant_env):
        """mu = 1 leaves a cap below n, so every replica exceeds"""
        tail = hitting_tail(constant_env, [0], n=10, mu=1.0, replicas=30, seed=0)
        assert tail.cap == 9
        assert tail.estimate.p_hat == 1.0

    def test_hitting_tail_rare(self, constant_env):
        """T_100 has mean 200 and sd ~25, so 400 is never needed"""
        tail = hitting_tail(constant_env, [0], n=100, mu=4.0, replicas=100, seed=1)
        assert tail.estimate.successes == 0
        assert tail.estimate.degenerate

    def test_hitting_tail_family_monotone(self, nestling_env):
        """More starting sites can only raise the fraction"""
        one = hitting_tail(nestling_env, [0], n=50, mu=6.0, replicas=200, seed=2)
        three = hitting_tail(nestling_env, [0, 100, 200], n=50, mu=6.0, replicas=200, seed=2)
        assert three.estimate.successes >= one.estimate.successes


class TestPoissonComparisons:
    """Tests for poisson_gof and tv_distance_to_poisson"""

    def test_tv_point_mass_at_zero(self):
        """All zeros against Poisson(1): 1 - e^-1"""
        tv = tv_distance_to_poisson(np.zeros(1000, dtype=int), 1.0)
        assert tv == pytest.approx(1.0 - math.exp(-1.0), abs=1e-8)

    def test_tv_exact_pmf(self):
        pmf = poisson.pmf(np.arange(60), 2.5)
        assert tv_distance_to_poisson(None, 2.5, pmf=pmf) == pytest.approx(0.0, abs=1e-8)

    def test_tv_needs_samples(self):
        with pytest.raises(InsufficientSamples):
            tv_distance_to_poisson(np.zeros(10, dtype=int), 1.0)

    def test_gof_rejects_point_mass(self):
        result = poisson_gof(np.full(2000, 2), 2.0)
        assert result.rejects(0.05)
        assert result.dof >= 1

    def test_gof_accepts_stratified_sample(self):
        """Quantiles on an even grid match the law almost exactly"""
        u = (np.arange(5000) + 0.5) / 5000
        samples = poisson.ppf(u, 3.0).astype(int)
        result = poisson_gof(samples, 3.0)
        assert result.p_value > 0.5
        assert result.bins[-1][1] is None

    def test_gof_needs_samples(self):
        with pytest.raises(InsufficientSamples, match="at least 1000"):
            poisson_gof([1, 2, 3], 2.0)


class TestCalibration:
    """Rejection rates, distances and coverage of the estimators on exact samples"""

    @staticmethod
    def poisson_samples(lam, reps, size, key):
        u = uniforms(key, np.arange(reps)[:, None], np.arange(size)[None, :])
        return poisson.ppf(u, lam).astype(np.int64)

    def test_gof_null_rejection_rate(self):
        """Poisson(2) samples are rejected at level 0.05 about 5% of the time"""
        samples = self.poisson_samples(2.0, 2000, 1000, 11)
        rate = np.mean([poisson_gof(row, 2.0).rejects(0.05) for row in samples])
        assert abs(rate - 0.05) <= 0.02

    def test_gof_power_against_doubled_mean(self):
        samples = self.poisson_samples(4.0, 200, 1000, 12)
        rate = np.mean([poisson_gof(row, 2.0).rejects(0.05) for row in samples])
        assert rate >= 0.99

    def test_tv_small_for_exact_samples(self):
        """10^4 Poisson(2) draws sit within 0.03 of their law"""
        (samples,) = self.poisson_samples(2.0, 1, 10_000, 13)
        assert tv_distance_to_poisson(samples, 2.0) < 0.03

    def test_wilson_coverage(self):
        """Nominal 95% intervals cover p = 0.3 at least 92% of the time"""
        hits = uniforms(14, np.arange(2000)[:, None], np.arange(200)[None, :]) < 0.3
        covered = 0
        for successes in hits.sum(axis=1):
            lo, hi = wilson_interval(int(successes), 200)
            covered += lo <= 0.3 <= hi
        assert covered / 2000 >= 0.92


class TestParticleEstimators:
    """Tests for stationarity, convergence, mean preservation and hydrodynamics"""

    def test_stationarity_constant_environment(self, constant_spec):
        """Poisson(2) marginals at three probes stay Poisson(2)"""
        report = stationarity_check(constant_spec, 1.0, Window(0, 2), [0, 5], quenched(1500))
        np.testing.assert_allclose(report.expected, 2.0, atol=1e-8)
        assert report.z_scores.max() < 4.5
        assert report.z_scores.shape == (2, 3)

    def test_gof_pools_every_time(self, constant_spec):
        """One GOF test per (time, probe, batch)"""
        report = stationarity_check(constant_spec, 1.0, Window(0, 2), [0, 3, 5], quenched(2000), batches=2)
        assert report.times == [0, 3, 5]
        assert report.tests == 3 * 3 * 2
        assert 0.0 <= report.rejection_rate <= 1.0

    def test_stationarity_two_point_one_step(self, nestling_spec):
        """Poisson(alpha f) stays Poisson after one step at ten probe sites"""
        policy = quenched(100_000, master=5)
        report = stationarity_check(nestling_spec, 0.5, Window(0, 9), [1], policy)
        f = compute_f(Environment(nestling_spec, policy.fixed_env_seed()), Window(0, 9), 1e-10).values
        np.testing.assert_allclose(report.expected, 0.5 * f, rtol=1e-8)
        assert len(set(np.round(report.expected, 8))) > 1
        z = report.z_scores[0]
        assert z.max() < 3.5
        pooled = abs((report.means[0] - report.expected).sum()) / math.sqrt(report.expected.sum() / policy.replicas)
        assert pooled < 3.0
        np.testing.assert_allclose(report.dispersions[0], 1.0, atol=0.03)

    def test_stationarity_needs_quenched(self, constant_spec):
        with pytest.raises(ValueError, match="quenched"):
            stationarity_check(constant_spec, 1.0, Window(0, 0), [1], averaged(10))

    def test_convergence_from_one_per_site(self, constant_spec):
        """One particle per site relaxes toward Poisson(v_P * 1 * f) = Poisson(1)"""
        report = convergence_tv(constant_spec, DeterministicConstant(1), [0, 20], quenched(2000))
        assert report.target_mean == pytest.approx(1.0)
        assert report.tv[0] == pytest.approx(1.0 - math.exp(-1.0), abs=1e-8)
        assert report.tv[1] < 0.3
        assert report.decreasing()

    def test_mean_preservation(self, constant_spec):
        """E eta_n(0) stays 1 for one particle per site"""
        report = mean_preservation(constant_spec, DeterministicConstant(1), [5, 10], quenched(2000))
        assert report.initial_mean == 1.0
        assert report.initial_stderr == 0.0
        assert max(report.z_scores()) < 4.5

    def test_transport_target(self):
        """Unit block shifted by 1/4 against a hat on [0, 2]"""
        g = triangle(0.0, 2.0)
        value = transport_target(Indicator(0.0, 1.0), g, g.support, 0.25, g.breakpoints())
        assert value == pytest.approx(0.6875, abs=1e-7)

    def test_hydro_small(self, constant_spec):
        """N = 200, t = 1/2: pairings follow the profile moved by v_P t"""
        report = hydro_transport_error(
            constant_spec, Indicator(0.0, 1.0), 200, 0.5, [triangle(0.0, 2.0)],
            quenched(20), rounding="floor", names=["hat"],
        )
        assert report.steps == 100
        (result,) = report.results
        assert result.name == "hat"
        assert result.target == pytest.approx(0.6875, abs=1e-6)
        assert result.mean_error < 0.1

    def test_hydro_needs_test_functions(self, constant_spec):
        with pytest.raises(ValueError, match="test function"):
            hydro_transport_error(constant_spec, Indicator(0.0, 1.0), 10, 0.1, [], quenched(1))

    def test_chunking_does_not_change_results(self, nestling_spec, monkeypatch):
        """Replica chunks are keyed by replica, so any chunk size gives the same counts"""
        whole = convergence_tv(nestling_spec, DeterministicConstant(1), [0, 7, 15], quenched(1000, master=2))
        monkeypatch.setattr(estimators, "CHUNK_CELLS", 64)
        calls = []

        def mapper(fn, items):
            calls.append(len(items))
            return [fn(item) for item in reversed(items)][::-1]

        chunked = convergence_tv(
            nestling_spec, DeterministicConstant(1), [0, 7, 15], quenched(1000, master=2), mapper=mapper,
        )
        assert calls[0] > 1
        assert chunked.tv == whole.tv

    def test_long_horizon_quenched_runtime(self, nestling_spec):
        """Quenched marginals at n = 400 for 5000 replicas route particles without moving them"""
        started = time.perf_counter()
        report = convergence_tv(nestling_spec, DeterministicConstant(1), [0, 100, 400], quenched(5000, master=4))
        assert time.perf_counter() - started < 60.0
        assert report.tv[-1] < report.tv[0]

    def test_mean_preservation_averaged(self, nestling_spec):
        """Averaged over environments E eta_n(0) stays 1 from one particle per site"""
        report = mean_preservation(nestling_spec, DeterministicConstant(1), [10, 40], averaged(400, master=6))
        assert report.initial_mean == 1.0
        assert max(report.z_scores()) < 4.5
