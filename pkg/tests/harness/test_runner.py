# ABOUTME: Tests for ExperimentRunner: reports, expectations, budgets, output files and worker settings.
# ABOUTME: Runs only small configs; simulated ones use the constant environment.

import shutil

import pytest

from rwre_harness.errors import ConfigError, ReportError, ResourceCap
from rwre_harness.model import ExperimentReport, Series
from rwre_harness.runner import (
    ExperimentRunner,
    atomic_write,
    emit_plot_data,
    load_report,
    resolve_workers,
)


@pytest.fixture
def runner():
    return ExperimentRunner(workers=1)


def small_report(series):
    return ExperimentReport(
        kind="converge", name="tiny", version="0.1.0", config={}, results={}, series=series,
    )


class TestRun:
    """Test ExperimentRunner.run"""

    def test_invariants_fixture(self, runner, parser, fixtures_dir):
        config = parser.parse_file(fixtures_dir / "invariants.json")
        report = runner.run(config, write=False)
        assert report.passed
        assert report.get_result("invariants.speed") == pytest.approx(3.0 / 13.0, abs=1e-12)
        assert report.get_result("site_steps") == 0
        names = [c.name for c in report.criteria]
        assert "expect:invariants.speed" in names
        assert "expect:invariants.s_exponent" in names

    def test_f_check_constant(self, runner, parser, fixtures_dir):
        """In a constant p = 3/4 environment f is 2 at every site"""
        config = parser.parse_file(fixtures_dir / "f_check.json")
        report = runner.run(config, write=False)
        assert report.passed
        assert report.get_result("max_residual") <= 3e-10
        assert report.get_result("mean_f") == pytest.approx(2.0, abs=1e-8)
        assert report.series[0].name == "f"

    def test_failing_expectation(self, runner, make_config):
        config = make_config("invariants", expect={"invariants.speed": {"value": 0.1, "tol": 1e-3}})
        report = runner.run(config, write=False)
        assert not report.passed
        (failed,) = [c for c in report.criteria if not c.passed]
        assert failed.name == "expect:invariants.speed"
        assert "0.5" in failed.detail

    def test_missing_result_fails_expectation(self, runner, make_config):
        report = runner.run(make_config("invariants", expect={"nothing.here": {"min": 0}}), write=False)
        assert not report.passed

    def test_invalid_config(self, runner, make_config):
        config = make_config("speed", params={"n": 10})
        config.params.pop("n")
        with pytest.raises(ConfigError) as info:
            runner.run(config, write=False)
        assert info.value.field == "params.n"

    def test_resource_cap(self, runner, make_config):
        """10 walks of 100 steps cost 1000 site-steps"""
        config = make_config(
            "speed", params={"n": 100}, seeds={"master": 0, "replicas": 10}, limits={"site_steps": 50},
        )
        with pytest.raises(ResourceCap, match="speed needs 1e\\+03 site-steps"):
            runner.run(config, write=False)

    def test_site_steps_recorded(self, runner, make_config):
        config = make_config("speed", params={"n": 100}, seeds={"master": 0, "replicas": 10})
        assert runner.run(config, write=False).get_result("site_steps") == 1000

    def test_reproducible_without_timing(self, make_config):
        """Same config and seeds give byte-identical reports once timing is dropped"""
        config = make_config("speed", params={"n": 200}, seeds={"master": 5, "replicas": 30})
        first = ExperimentRunner(workers=1).run(config, write=False)
        second = ExperimentRunner(workers=1).run(config, write=False)
        assert first.to_json(include_timing=False) == second.to_json(include_timing=False)

    def test_couple_series(self, runner, parser, fixtures_dir):
        config = parser.parse_file(fixtures_dir / "couple_small.json")
        report = runner.run(config, write=False)
        plus, minus = report.series
        assert (plus.name, minus.name) == ("beta_plus", "beta_minus")
        assert len(plus.x) == len(minus.x) == 11
        assert "coupled_invariants" in [c.name for c in report.criteria]


class TestOutputs:
    """Test report files and plot data"""

    def test_write_report(self, runner, parser, fixtures_dir, tmp_path):
        config = parser.parse_file(fixtures_dir / "invariants.json")
        config.output_dir = tmp_path
        runner.run(config)
        written = sorted(p.name for p in tmp_path.iterdir())
        assert written == [
            "nestling-invariants.report.json",
            "nestling-invariants.rho_moment.csv",
            "nestling-invariants.summary.md",
        ]
        summary = (tmp_path / "nestling-invariants.summary.md").read_text()
        assert summary.startswith("# nestling-invariants (invariants)")
        assert "**PASS**" in summary

    def test_load_report(self, runner, make_config, tmp_path):
        config = make_config("speed", params={"n": 50}, seeds={"master": 1, "replicas": 5}, name="walks")
        report = runner.run(config)
        loaded = load_report(tmp_path / "out" / "walks.report.json")
        assert loaded.name == "walks"
        assert loaded.criteria == report.criteria
        assert loaded.get_result("speed.replicas") == 5

    def test_load_missing_report(self, tmp_path):
        with pytest.raises(ReportError, match="cannot read report"):
            load_report(tmp_path / "gone.report.json")

    def test_emit_plot_data(self, tmp_path):
        report = small_report([Series("tv", [0, 1, 2], [0.6, 0.3, 0.1])])
        (path,) = emit_plot_data(report, tmp_path)
        assert path == tmp_path / "tiny.tv.csv"
        lines = path.read_text().splitlines()
        assert len(lines) == 4
        assert lines[0] == "series,x,y,lo,hi"
        assert lines[1] == "tv,0.0,0.6,,"

    def test_emit_plot_data_custom_stem(self, tmp_path):
        report = small_report([Series("a", [1], [2], [1.5], [2.5])])
        (path,) = emit_plot_data(report, tmp_path, stem="other")
        assert path.name == "other.a.csv"
        assert path.read_text().splitlines()[1] == "a,1.0,2.0,1.5,2.5"

    def test_emit_without_series(self, tmp_path):
        with pytest.raises(ReportError, match="no series"):
            emit_plot_data(small_report([]), tmp_path)
        assert list(tmp_path.iterdir()) == []

    def test_atomic_write_leaves_no_temp_files(self, tmp_path):
        target = tmp_path / "deep" / "file.txt"
        atomic_write(target, "one")
        atomic_write(target, "two")
        assert target.read_text() == "two"
        assert [p.name for p in target.parent.iterdir()] == ["file.txt"]

    def test_atomic_write_failure(self, tmp_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("")
        with pytest.raises(ReportError, match="cannot write"):
            atomic_write(blocker / "file.txt", "x")

    def test_report_error_is_os_error(self):
        assert issubclass(ReportError, OSError)


class TestBatch:
    """Test run_batch"""

    def test_empty_directory(self, runner, tmp_path):
        with pytest.raises(ConfigError, match="no experiment configs"):
            runner.run_batch(tmp_path)

    def test_sorted_batch(self, runner, fixtures_dir, tmp_path, monkeypatch):
        configs = tmp_path / "configs"
        configs.mkdir()
        shutil.copy(fixtures_dir / "invariants.json", configs / "b.json")
        shutil.copy(fixtures_dir / "f_check.json", configs / "a.json")
        monkeypatch.chdir(tmp_path)
        reports = runner.run_batch(configs)
        assert [p.name for p in reports] == ["a.json", "b.json"]
        assert all(r.passed for r in reports.values())
        assert (tmp_path / "results" / "a.report.json").exists()

    def test_no_write(self, runner, fixtures_dir, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        runner.run_batch(fixtures_dir / "invariants.json", write=False)
        assert not (tmp_path / "results").exists()


class TestWorkers:
    """Test worker-count resolution"""

    def test_default(self, monkeypatch):
        monkeypatch.delenv("RWRE_WORKERS", raising=False)
        assert resolve_workers() == 1

    def test_environment_variable(self, monkeypatch):
        monkeypatch.setenv("RWRE_WORKERS", "3")
        assert resolve_workers() == 3
        assert resolve_workers(2) == 2

    def test_floor_of_one(self, monkeypatch):
        monkeypatch.setenv("RWRE_WORKERS", "0")
        assert resolve_workers() == 1

    def test_bad_value(self, monkeypatch):
        monkeypatch.setenv("RWRE_WORKERS", "many")
        with pytest.raises(ConfigError) as info:
            resolve_workers()
        assert info.value.field == "RWRE_WORKERS"
