# ABOUTME: Tests for the Experiment base class and every registered experiment kind.
# ABOUTME: Each kind runs once on a small constant-environment config through the runner.

import math

import numpy as np
import pytest

from rwre_harness.base import Experiment
from rwre_harness.experiments import EXPERIMENTS, create_experiment, registered_kinds
from rwre_harness.model import EXPERIMENT_KINDS
from rwre_harness.runner import ExperimentRunner
from rwre_lab import estimators
from rwre_lab.errors import ParityError


def run(config, workers=1):
    return ExperimentRunner(workers=workers).run(config, write=False)


def criterion(report, name):
    (found,) = [c for c in report.criteria if c.name == name]
    return found


class TestRegistry:
    """Test the experiment registry"""

    def test_every_kind_registered(self):
        assert set(EXPERIMENTS) == set(EXPERIMENT_KINDS)
        assert list(registered_kinds()) == sorted(EXPERIMENT_KINDS)

    def test_unknown_kind(self, make_config):
        config = make_config("invariants")
        config.kind = "teleport"
        with pytest.raises(ValueError, match="no experiment registered"):
            create_experiment(config)

    def test_classes_know_their_kind(self):
        assert EXPERIMENTS["speed"].kind == "speed"
        assert EXPERIMENTS["meet"].required_params == ("y", "z", "horizon")


class TestExperimentBase:
    """Test the Experiment base class"""

    def test_compute_not_implemented(self, make_config):
        with pytest.raises(NotImplementedError, match="must be implemented"):
            Experiment(make_config("invariants")).compute()

    def test_missing_params(self, make_config):
        config = make_config("speed", params={"n": 10})
        config.params.pop("n")
        with pytest.raises(ValueError, match=r"missing required params: \['n'\]"):
            create_experiment(config).execute()

    def test_map_inline(self, make_config):
        exp = Experiment(make_config("invariants"), workers=1)
        assert exp.map(abs, [-1, -2, 3]) == [1, 2, 3]

    def test_execute_resets_collected_state(self, make_config):
        """Criteria and series of an earlier execute do not leak into the next"""
        exp = create_experiment(make_config("invariants"))
        exp.execute()
        first = len(exp.criteria), len(exp.series)
        exp.check("extra", True, "ok")
        exp.add_series("s", [0, 1], [2, 3])
        exp.execute()
        assert (len(exp.criteria), len(exp.series)) == first
        assert "extra" not in [c.name for c in exp.criteria]

    def test_execute_charges_meter(self, make_config):
        exp = create_experiment(make_config("speed", params={"n": 20}, seeds={"master": 0, "replicas": 4}))
        exp.execute()
        assert exp.meter.used == 80


class TestKinds:
    """Run every experiment kind on a small config"""

    def test_invariants_constant(self, make_config):
        """A constant law has no s root; the moment curve still covers [0, 4]"""
        report = run(make_config("invariants"))
        assert report.get_result("invariants.speed") == pytest.approx(0.5)
        assert report.get_result("invariants.s_exponent") is None
        assert report.series[0].x[-1] == pytest.approx(4.0)

    def test_speed(self, make_config):
        report = run(make_config("speed", params={"n": 200}, seeds={"master": 1, "mode": "averaged", "replicas": 50}))
        assert report.get_result("speed.mean") == pytest.approx(0.5, abs=0.05)
        assert report.get_result("speed.replicas") == 50
        assert len(report.series[0].x) == 1

    def test_lln(self, make_config):
        """100 walks of 100 steps never stray 0.5 from the speed"""
        params = {"A": 0, "B": 1, "n": 100, "master_seeds": 3, "threshold": 0.5}
        report = run(make_config("lln", params=params))
        assert report.get_result("walks") == 100
        assert report.get_result("fraction_below") == 1.0
        assert len(report.get_result("max_deviations")) == 3
        assert criterion(report, "uniform_lln").passed

    def test_lln_worker_count_does_not_change_results(self, make_config):
        params = {"A": 0, "B": 1, "n": 50, "master_seeds": 2}
        inline = run(make_config("lln", params=params), workers=1)
        pooled = run(make_config("lln", params=params), workers=2)
        assert inline.get_result("max_deviations") == pooled.get_result("max_deviations")

    def test_slowdown(self, make_config):
        report = run(make_config(
            "slowdown", params={"ns": [20, 80], "v": 0.3}, seeds={"master": 2, "replicas": 100},
        ))
        assert report.get_result("v") == 0.3
        assert report.series[0].x == [20.0, 80.0]
        assert "strictly_decreasing" in [c.name for c in report.criteria]

    def test_slowdown_default_velocity(self, make_config):
        report = run(make_config("slowdown", params={"ns": [10]}, seeds={"master": 2, "replicas": 10}))
        assert report.get_result("v") == pytest.approx(0.25)

    def test_hitting(self, make_config):
        params = {"n": 20, "mu": 4.0, "starts": [0, 10], "max_probability": 0.5}
        report = run(make_config("hitting", params=params, seeds={"master": 3, "replicas": 40}))
        assert report.get_result("backtrack.measure") == "below_start"
        assert report.series[0].name == "backtrack"
        assert criterion(report, "hitting_tail").passed

    def test_stationary(self, make_config):
        """Poisson(1 * f) with f = 2 keeps mean 2 at the probes"""
        params = {"alpha": 1.0, "probes": [0, 2], "T": 2, "z_max": 6.0}
        report = run(make_config("stationary", params=params, seeds={"master": 4, "replicas": 1000}))
        expected = [s for s in report.series if s.name == "expected_mean"][0]
        np.testing.assert_allclose(expected.y, 2.0, atol=1e-8)
        assert criterion(report, "marginal_means").passed

    def test_converge(self, make_config):
        params = {"ns": [0, 10], "law": {"kind": "constant", "k": 1}, "mean_check": True, "z_max": 5.0}
        report = run(make_config("converge", params=params, seeds={"master": 5, "replicas": 1000}))
        tv = report.get_result("convergence.tv")
        assert tv[0] == pytest.approx(1.0 - math.exp(-1.0), abs=1e-8)
        assert criterion(report, "tv_decreasing").passed
        assert criterion(report, "mean_preserved").passed

    def test_particle_kinds_independent_of_workers(self, make_config, monkeypatch):
        """Replica chunks fan out over processes without changing any count"""
        stationary = {"alpha": 1.0, "probes": [0, 2], "T": 4, "times": [0, 2]}
        converge = {"ns": [0, 6], "law": {"kind": "constant", "k": 1}, "mean_check": True, "mean_replicas": 50}
        seeds = {"master": 8, "replicas": 1000}
        inline_s = run(make_config("stationary", params=stationary, seeds=seeds))
        inline_c = run(make_config("converge", params=converge, seeds=seeds))
        monkeypatch.setattr(estimators, "CHUNK_CELLS", 64)
        pooled_s = run(make_config("stationary", params=stationary, seeds=seeds), workers=2)
        pooled_c = run(make_config("converge", params=converge, seeds=seeds), workers=2)
        assert inline_s.get_result("stationarity.means") == pooled_s.get_result("stationarity.means")
        assert inline_s.get_result("stationarity.times") == [0, 2, 4]
        assert inline_c.get_result("convergence.tv") == pooled_c.get_result("convergence.tv")
        assert inline_c.get_result("mean_preservation.means") == pooled_c.get_result("mean_preservation.means")

    def test_couple_shared_seeds(self, make_config):
        """Identical laws and configuration seeds leave no discrepancy at all"""
        params = {
            "law_eta": {"kind": "poisson", "lam": 1.0},
            "law_zeta": {"kind": "poisson", "lam": 1.0},
            "window": [0, 9],
            "T": 5,
            "shared_config_seeds": True,
            "coupled_checks": 0,
        }
        report = run(make_config("couple", params=params, seeds={"master": 6, "replicas": 5}))
        assert report.get_result("beta_plus_start") == 0.0
        assert report.get_result("beta_minus_end") == 0.0
        assert report.passed

    def test_hydro(self, make_config):
        params = {
            "profile": {"kind": "indicator", "a": 0, "b": 1},
            "N": [20, 50],
            "t": 0.2,
            "test_functions": [{"kind": "triangle", "a": 0, "b": 2}],
            "rounding": "floor",
            "error_max": 1.0,
        }
        report = run(make_config("hydro", params=params, seeds={"master": 7, "replicas": 5}))
        scales = report.get_result("scales")
        assert [s["steps"] for s in scales] == [4, 10]
        assert criterion(report, "transport_error").passed
        assert report.series[0].x == [20.0, 50.0]

    def test_meet(self, parser, fixtures_dir):
        config = parser.parse_file(fixtures_dir / "nested" / "meet_constant.json")
        report = run(config)
        assert report.get_result("replicas") == 50
        assert 0.0 <= report.get_result("fraction_met") <= 1.0
        assert criterion(report, "fraction_monotone").passed
        assert criterion(report, "crosscheck").passed
        assert sum(report.get_result("histogram.counts")) <= 50

    def test_meet_odd_separation(self, make_config):
        with pytest.raises(ParityError):
            run(make_config("meet", params={"y": 0, "z": 1, "horizon": 10}))
