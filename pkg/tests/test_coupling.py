# ABOUTME: Unit tests for the coupled eta/zeta system, discrepancy decay and the meeting experiment.
# ABOUTME: Pathwise checks run the full (growing-window) coupling where every particle is tracked.

import numpy as np
import pytest

from rwre_lab.coupling import (
    CoupledConfiguration,
    DiscrepancySeries,
    couple_initial,
    coupled_evolve,
    coupled_step,
    discrepancy_decay,
    meeting_experiment,
    rematch,
)
from rwre_lab.errors import ParityError, WindowMismatch, WindowTooSmall
from rwre_lab.particles import Configuration, PoissonConstant, evolve, sample_initial
from rwre_lab.rng import SeedMode, SeedPolicy
from rwre_lab.window import Window


@pytest.fixture
def pair(nestling_env):
    """eta ~ Poisson(2), zeta ~ Poisson(1) on 41 sites"""
    window = Window(0, 40)
    eta = sample_initial(nestling_env, PoissonConstant(2.0), window, 1)
    zeta = sample_initial(nestling_env, PoissonConstant(1.0), window, 2)
    return eta, zeta


class TestCoupleInitial:
    """Tests for couple_initial"""

    def test_split_at_a_site(self):
        """eta(x) = 3, zeta(x) = 1 gives xi = 1, beta+ = 2, beta- = 0"""
        window = Window(0, 1)
        eta = Configuration(window, np.array([3, 0]))
        zeta = Configuration(window, np.array([1, 2]))
        cc = couple_initial(eta, zeta)
        assert cc.xi.tolist() == [1, 0]
        assert cc.beta_plus.tolist() == [2, 0]
        assert cc.beta_minus.tolist() == [0, 2]

    def test_identical_configurations(self, pair):
        eta, _ = pair
        cc = couple_initial(eta, eta)
        np.testing.assert_array_equal(cc.xi, eta.counts)
        assert cc.beta_plus.sum() == 0
        assert cc.beta_minus.sum() == 0

    def test_empty_first_system(self, pair):
        """eta = 0 leaves every zeta particle unmatched"""
        _, zeta = pair
        cc = couple_initial(Configuration.empty(zeta.window), zeta)
        assert cc.xi.sum() == 0
        np.testing.assert_array_equal(cc.beta_minus, zeta.counts)

    def test_marginals_recovered(self, pair):
        eta, zeta = pair
        cc = couple_initial(eta, zeta)
        assert cc.eta == eta
        assert cc.zeta == zeta

    def test_window_mismatch(self, pair):
        eta, _ = pair
        with pytest.raises(WindowMismatch):
            couple_initial(eta, Configuration.empty(Window(0, 10)))


class TestCoupledConfiguration:
    """Tests for CoupledConfiguration validation"""

    def test_both_discrepancies_positive(self):
        with pytest.raises(ValueError, match="both positive"):
            CoupledConfiguration(Window(0, 0), [0], [1], [1])

    def test_validate_reports_shape(self):
        cc = CoupledConfiguration(Window(0, 1), [0, 0], [0, 0], [0, 0])
        cc.beta_plus = np.array([1])
        ok, errors = cc.validate()
        assert not ok
        assert "beta_plus has shape" in errors[0]


class TestCoupledStep:
    """Tests for coupled_step / coupled_evolve"""

    def test_matched_systems_follow_evolve(self, nestling_env, pair):
        """With no discrepancies the coupled step is evolve on xi"""
        eta, _ = pair
        cc = coupled_evolve(nestling_env, couple_initial(eta, eta), 15, dyn_seed=3)
        assert cc.eta == evolve(nestling_env, eta, 15, dyn_seed=3)
        assert cc.beta_plus.sum() == 0

    def test_single_step(self, nestling_env, pair):
        eta, zeta = pair
        cc = coupled_step(nestling_env, couple_initial(eta, zeta), dyn_seed=5)
        assert cc.time == 1
        assert cc.window == Window(-1, 41)
        assert cc.validate()[0]

    def test_pathwise_conservation_and_decay(self, nestling_env, pair):
        """Each system keeps its particles; beta- never grows; beta+ - beta- is constant"""
        eta, zeta = pair
        cc = couple_initial(eta, zeta)
        minus = [int(cc.beta_minus.sum())]
        gap = int(cc.beta_plus.sum() - cc.beta_minus.sum())
        for _ in range(25):
            cc = coupled_step(nestling_env, cc, dyn_seed=7)
            assert cc.eta.total == eta.total
            assert cc.zeta.total == zeta.total
            assert int(cc.beta_plus.sum() - cc.beta_minus.sum()) == gap
            minus.append(int(cc.beta_minus.sum()))
        assert all(b <= a for a, b in zip(minus, minus[1:]))

    def test_cone_mode_matches_full(self, nestling_env, pair):
        eta, zeta = pair
        cc = couple_initial(eta, zeta)
        observe = Window(10, 30)
        full = coupled_evolve(nestling_env, cc, 8, dyn_seed=2)
        cone = coupled_evolve(nestling_env, cc, 8, dyn_seed=2, observe=observe)
        off = full.window.offset(observe.lo)
        np.testing.assert_array_equal(cone.xi, full.xi[off:off + observe.size])
        np.testing.assert_array_equal(cone.beta_minus, full.beta_minus[off:off + observe.size])

    def test_observe_outside_cone(self, nestling_env, pair):
        eta, zeta = pair
        with pytest.raises(WindowTooSmall):
            coupled_evolve(nestling_env, couple_initial(eta, zeta), 5, 0, observe=Window(0, 40))

    def test_forced_rematch(self):
        """A + and a - particle arriving at one site become matched"""
        xi = np.array([[0, 0, 0]])
        plus = np.array([[0, 1, 0]])
        minus = np.array([[0, 1, 0]])
        new_xi, bp, bm = rematch(xi, plus, minus)
        assert new_xi.tolist() == [[0, 1, 0]]
        assert bp.sum() == 0
        assert bm.sum() == 0

    def test_rematch_keeps_surplus(self):
        new_xi, bp, bm = rematch(np.array([1]), np.array([3]), np.array([1]))
        assert (new_xi[0], bp[0], bm[0]) == (2, 2, 0)


class TestDiscrepancyDecay:
    """Tests for discrepancy_decay and DiscrepancySeries"""

    def test_identical_laws_shared_seeds(self, nestling_spec):
        """Same law and same configuration seeds give no discrepancies at all"""
        policy = SeedPolicy(SeedMode.QUENCHED, replicas=4, master_seed=1)
        law = PoissonConstant(1.0)
        series = discrepancy_decay(nestling_spec, law, law, Window(0, 20), 6, policy, shared_config_seeds=True)
        assert np.all(series.plus_density == 0.0)
        assert np.all(series.minus_density == 0.0)
        assert len(series.steps) == 7

    def test_minus_density_falls(self, constant_spec):
        """Poisson(2) over Poisson(1): mean beta- density falls over 40 steps"""
        policy = SeedPolicy(SeedMode.QUENCHED, replicas=20, master_seed=3)
        series = discrepancy_decay(
            constant_spec, PoissonConstant(2.0), PoissonConstant(1.0), Window(0, 99), 40, policy
        )
        assert series.minus_density[-1] < series.minus_density[0]
        assert series.plus_density[0] > series.minus_density[0]

    def test_monotone_violations(self):
        series = DiscrepancySeries(
            steps=np.arange(4),
            plus_density=np.array([1.0, 1.0, 1.0, 1.0]),
            minus_density=np.array([0.5, 0.4, 0.9, 0.3]),
            plus_stderr=np.full(4, 0.01),
            minus_stderr=np.full(4, 0.01),
            diff_stderr=np.full(4, 0.01),
            window=Window(0, 9),
            replicas=5,
        )
        assert series.monotone_violations(k=2.0) == [1]
        assert series.difference_drift() > 3.0

    def test_csv(self, nestling_spec):
        policy = SeedPolicy(SeedMode.QUENCHED, replicas=2, master_seed=0)
        series = discrepancy_decay(
            nestling_spec, PoissonConstant(1.0), PoissonConstant(0.5), Window(0, 5), 2, policy
        )
        lines = series.to_csv().splitlines()
        assert lines[0] == "step,beta_plus_density,beta_minus_density,beta_plus_stderr,beta_minus_stderr"
        assert len(lines) == 4


class TestMeeting:
    """Tests for meeting_experiment"""

    def test_same_start(self, nestling_env):
        report = meeting_experiment(nestling_env, 3, 3, horizon=10, replicas=5, seed=0)
        assert report.fraction_met == 1.0
        assert np.all(report.times == 0)

    def test_odd_separation(self, nestling_env):
        with pytest.raises(ParityError):
            meeting_experiment(nestling_env, 0, 3, horizon=10, replicas=5, seed=0)

    def test_constant_environment_meets(self, constant_env):
        """Lazy symmetric difference walk: nearly all pairs meet within 10^4 steps"""
        report = meeting_experiment(constant_env, 0, 2, horizon=10_000, replicas=200, seed=1)
        assert report.fraction_met >= 0.95
        fractions = [report.fraction_by(2 ** k) for k in range(15)]
        assert all(b >= a for a, b in zip(fractions, fractions[1:]))

    def test_histogram_counts_meetings(self, nestling_env):
        report = meeting_experiment(nestling_env, 0, 4, horizon=500, replicas=100, seed=2)
        edges, counts = report.histogram()
        assert counts.sum() == np.sum(report.times >= 0)
        assert edges[-1] > report.horizon

    def test_crosscheck(self, nestling_env):
        """A record flip never precedes a meeting"""
        report = meeting_experiment(nestling_env, 0, 2, horizon=500, replicas=100, seed=3, crosscheck=True)
        assert report.crosscheck_consistent() is True

    def test_crosscheck_off(self, nestling_env):
        report = meeting_experiment(nestling_env, 0, 2, horizon=10, replicas=3, seed=3)
        assert report.crosscheck_consistent() is None
