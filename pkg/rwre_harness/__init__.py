# ABOUTME: Experiment harness - declarative JSON configs bound to reproducible runs and reports.
# ABOUTME: Exposes the parser, the runner entry points and the experiment registry.

from rwre_harness.errors import ConfigError, HarnessError, ReportError, ResourceCap
from rwre_harness.model import (
    EXPERIMENT_KINDS,
    Criterion,
    ExperimentConfig,
    ExperimentReport,
    Expectation,
    Series,
)
from rwre_harness.parser import ConfigParser
from rwre_harness.runner import ExperimentRunner, emit_plot_data, load_report, run
from rwre_harness.experiments import EXPERIMENTS, create_experiment

__all__ = [
    "HarnessError",
    "ConfigError",
    "ResourceCap",
    "ReportError",
    "EXPERIMENT_KINDS",
    "Criterion",
    "ExperimentConfig",
    "ExperimentReport",
    "Expectation",
    "Series",
    "ConfigParser",
    "ExperimentRunner",
    "run",
    "emit_plot_data",
    "load_report",
    "EXPERIMENTS",
    "create_experiment",
]
