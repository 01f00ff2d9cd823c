"""Experiment runner

This module runs parsed experiments, turns their results into reports and
writes the outputs. Every file is written to a temporary sibling first and
renamed into place, so an interrupted run never leaves a partial file at a
final path.
"""

import csv
import io
import json
import logging
import os
import time
import uuid
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Union

from rwre_harness.budget import ResourceMeter
from rwre_harness.errors import ConfigError, ReportError
from rwre_harness.experiments import create_experiment
from rwre_harness.model import Criterion, ExperimentConfig, ExperimentReport, to_jsonable
from rwre_harness.parser import ConfigParser
from rwre_harness.render import SummaryRenderer
from rwre_harness.resolver import REPORT_SUFFIX, ConfigResolver
from rwre_lab import __version__

logger = logging.getLogger(__name__)

WORKERS_ENV = "RWRE_WORKERS"
CSV_COLUMNS = ("series", "x", "y", "lo", "hi")


def resolve_workers(requested: Optional[int] = None) -> int:
    """Worker count: explicit request, then $RWRE_WORKERS, then 1"""
    if requested is not None:
        return max(1, int(requested))
    value = os.environ.get(WORKERS_ENV)
    if not value:
        return 1
    try:
        return max(1, int(value))
    except ValueError:
        raise ConfigError(WORKERS_ENV, f"expected an integer, got '{value}'") from None


def atomic_write(path: Path, text: str):
    """Write text to path through a temporary sibling and a rename

    Raises:
        ReportError: If the file cannot be written
    """
    path = Path(path)
    tmp_path = path.with_name(f".{path.name}.{uuid.uuid4().hex}.tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(tmp_path, "w", newline="") as f:
            f.write(text)
        tmp_path.replace(path)
    except OSError as exc:
        tmp_path.unlink(missing_ok=True)
        raise ReportError(f"cannot write {path}: {exc}") from exc


def config_echo(config: ExperimentConfig) -> Dict:
    """Everything needed to reproduce a run"""
    return {
        "document": config.raw,
        "environment": config.environment.to_dict(),
        "seeds": config.seeds.to_dict(),
        "params": to_jsonable(config.params),
        "site_step_limit": config.site_step_limit,
    }


def series_csv(report: ExperimentReport) -> Dict[str, str]:
    """Long-format CSV text (series, x, y, lo, hi) per series name"""
    out = {}
    for s in report.series:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for name, x, y, lo, hi in s.rows():
            writer.writerow([name, repr(float(x)), repr(float(y)),
                             "" if lo is None else repr(float(lo)),
                             "" if hi is None else repr(float(hi))])
        out[s.name] = buf.getvalue()
    return out


def emit_plot_data(
    report: ExperimentReport,
    out_dir: Union[str, Path],
    stem: Optional[str] = None,
) -> List[Path]:
    """Write one long-format CSV per report series

    Args:
        report: Report with at least one series
        out_dir: Directory for the CSV files
        stem: File stem (default: report name); files are {stem}.{series}.csv

    Returns:
        Paths written, in series order

    Raises:
        ReportError: If the report has no series (nothing is written) or a write fails
    """
    if not report.series:
        raise ReportError(f"report '{report.name}' has no series to emit")
    stem = stem or report.name
    paths = []
    for name, text in series_csv(report).items():
        path = Path(out_dir) / f"{stem}.{name}.csv"
        atomic_write(path, text)
        paths.append(path)
    logger.info("wrote %d plot-data files to %s", len(paths), out_dir)
    return paths


def load_report(path: Union[str, Path]) -> ExperimentReport:
    """Read a JSON report written by a run

    Raises:
        ReportError: If the file cannot be read or is not a report
    """
    try:
        with open(path, "r") as f:
            return ExperimentReport.from_dict(json.load(f))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ReportError(f"cannot read report {path}: {exc}") from exc


class ExperimentRunner:
    """Runs experiments and persists their reports"""

    def __init__(self, workers: Optional[int] = None, search_paths: Optional[List[Path]] = None):
        """Initialize runner

        Args:
            workers: Worker processes (default: $RWRE_WORKERS or 1)
            search_paths: Additional directories to resolve config names in
        """
        self.parser = ConfigParser()
        self.resolver = ConfigResolver(search_paths)
        self.renderer = SummaryRenderer()
        self.workers = resolve_workers(workers)

        # Reports of the latest batch: config path -> report
        self.reports: Dict[Path, ExperimentReport] = {}

    def run(self, config: ExperimentConfig, write: bool = True) -> ExperimentReport:
        """Execute one experiment

        Args:
            config: Parsed configuration
            write: Write the JSON report, summary and CSV series

        Returns:
            ExperimentReport

        Raises:
            ConfigError: If the configuration is invalid
            ResourceCap: If the estimated cost exceeds the site-step budget
            RWREError: Propagated from the library (e.g. AssumptionViolation)
        """
        is_valid, errors = config.validate()
        if not is_valid:
            field, _, message = errors[0].partition(": ")
            raise ConfigError(field, message)

        started = datetime.now(timezone.utc).isoformat(timespec="seconds")
        clock = time.perf_counter()
        logger.info("running %s experiment '%s'", config.kind, config.name)

        meter = ResourceMeter(config.site_step_limit)
        experiment = create_experiment(config, meter=meter, workers=self.workers)
        results = experiment.execute()

        report = ExperimentReport(
            kind=config.kind,
            name=config.name,
            version=__version__,
            config=config_echo(config),
            results=results,
            criteria=experiment.criteria,
            series=experiment.series,
            started=started,
        )
        report.results["site_steps"] = meter.used
        for exp in config.expect:
            actual = report.get_result(exp.key)
            report.criteria.append(Criterion(
                f"expect:{exp.key}", exp.check(actual), f"{_show(actual)} vs {exp.describe()}",
            ))
        report.wall_clock_seconds = round(time.perf_counter() - clock, 6)

        verdict = "PASS" if report.passed else "FAIL"
        logger.info("'%s': %s (%d criteria, %.2fs)", config.name, verdict,
                    len(report.criteria), report.wall_clock_seconds)
        for c in report.criteria:
            if not c.passed:
                logger.warning("criterion %s failed: %s", c.name, c.detail)

        if write:
            self.write_report(report, config)
        return report

    def run_file(self, config_path: Union[str, Path], write: bool = True) -> ExperimentReport:
        config = self.parser.parse_file(config_path)
        return self.run(config, write)

    def run_batch(self, target: Union[str, Path], write: bool = True) -> Dict[Path, ExperimentReport]:
        """Run every config a target resolves to, in sorted order

        Raises:
            ConfigError: If the target holds no configs, or on the first invalid config
        """
        paths = self.resolver.resolve(target)
        if not paths:
            raise ConfigError("<file>", f"no experiment configs found at {target}")
        self.reports.clear()
        for path in paths:
            self.reports[path] = self.run_file(path, write)
        return self.reports

    def write_report(self, report: ExperimentReport, config: ExperimentConfig) -> List[Path]:
        """Write {stem}.report.json, {stem}.summary.md and the CSV series

        Returns:
            Paths written
        """
        out_dir = Path(config.output_dir)
        stem = config.output_stem
        report_path = out_dir / f"{stem}{REPORT_SUFFIX}"
        summary_path = out_dir / f"{stem}.summary.md"
        atomic_write(report_path, report.to_json())
        atomic_write(summary_path, self.renderer.render(report))
        written = [report_path, summary_path]
        if report.series:
            written.extend(emit_plot_data(report, out_dir, stem))
        logger.info("report written to %s", report_path)
        return written


def _show(value) -> str:
    return f"{value:.6g}" if isinstance(value, float) else str(value)


def run(
    config: ExperimentConfig,
    workers: Optional[int] = None,
    write: bool = True,
) -> ExperimentReport:
    """Execute the experiment a config names and (optionally) write its outputs"""
    return ExperimentRunner(workers).run(config, write)
