"""Experiment configuration and report model

This module defines the data structures a run is described by (an
ExperimentConfig parsed from JSON) and the report it produces.
"""

import json
import math
from dataclasses import asdict, dataclass, field, is_dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from rwre_lab.environment import EnvironmentSpec
from rwre_lab.rng import SeedPolicy
from rwre_lab.window import Window

EXPERIMENT_KINDS = (
    "speed",
    "lln",
    "slowdown",
    "hitting",
    "stationary",
    "converge",
    "couple",
    "hydro",
    "meet",
    "f-check",
    "invariants",
)

# Parameters each experiment kind cannot run without
REQUIRED_PARAMS: Dict[str, Tuple[str, ...]] = {
    "speed": ("n",),
    "lln": ("A", "B", "n"),
    "slowdown": ("ns",),
    "hitting": ("n", "mu"),
    "stationary": ("alpha", "probes", "T"),
    "converge": ("ns",),
    "couple": ("law_eta", "law_zeta", "window", "T"),
    "hydro": ("profile", "N", "t", "test_functions"),
    "meet": ("y", "z", "horizon"),
    "f-check": (),
    "invariants": (),
}

DEFAULT_SITE_STEPS = 1e9
TIMING_KEYS = ("started", "wall_clock_seconds")


@dataclass
class Expectation:
    """Regression check of one reported estimate

    Attributes:
        key: Dotted path into the results (e.g. "invariants.speed")
        value: Target value (checked with tol)
        tol: Absolute tolerance around value
        min: Lower bound
        max: Upper bound
    """
    key: str
    value: Optional[float] = None
    tol: float = 0.0
    min: Optional[float] = None
    max: Optional[float] = None

    def check(self, actual: Any) -> bool:
        if actual is None:
            return False
        actual = float(actual)
        if self.value is not None and abs(actual - self.value) > self.tol:
            return False
        if self.min is not None and actual < self.min:
            return False
        if self.max is not None and actual > self.max:
            return False
        return True

    def describe(self) -> str:
        parts = []
        if self.value is not None:
            parts.append(f"= {self.value} +/- {self.tol}")
        if self.min is not None:
            parts.append(f">= {self.min}")
        if self.max is not None:
            parts.append(f"<= {self.max}")
        return f"{self.key} " + ", ".join(parts)


@dataclass
class ExperimentConfig:
    """A single reproducible experiment

    Attributes:
        kind: Experiment kind (one of EXPERIMENT_KINDS)
        name: Human-readable run name
        environment: Site law of the environment
        seeds: Replica seed policy (master seed mandatory)
        params: Experiment-specific parameters
        expect: Optional regression checks
        output_dir: Directory reports are written to
        stem: File stem of the outputs
        site_step_limit: Resource budget in site-steps
        raw: The configuration document as read (echoed in the report)
        source: File the configuration came from, if any
    """
    kind: str
    name: str
    environment: EnvironmentSpec
    seeds: SeedPolicy
    params: Dict[str, Any] = field(default_factory=dict)
    expect: List[Expectation] = field(default_factory=list)
    output_dir: Path = Path("results")
    stem: Optional[str] = None
    site_step_limit: float = DEFAULT_SITE_STEPS
    raw: Dict[str, Any] = field(default_factory=dict)
    source: Optional[Path] = None

    @property
    def output_stem(self) -> str:
        return self.stem or self.name

    def validate(self) -> Tuple[bool, List[str]]:
        """Validate semantic consistency

        Checks:
        - Experiment kind is known
        - Required experiment parameters are present
        - Budget and expectations are sane

        Returns:
            Tuple of (is_valid, list of error messages)
        """
        errors = []
        if self.kind not in EXPERIMENT_KINDS:
            errors.append(f"experiment: unknown experiment kind '{self.kind}'")
        else:
            for name in REQUIRED_PARAMS[self.kind]:
                if name not in self.params:
                    errors.append(f"params.{name}: required for '{self.kind}' experiments")
        if not self.site_step_limit > 0:
            errors.append("limits.site_steps: must be positive")
        for exp in self.expect:
            if exp.value is None and exp.min is None and exp.max is None:
                errors.append(f"expect.{exp.key}: needs value, min or max")
            if exp.tol < 0:
                errors.append(f"expect.{exp.key}: tol must be >= 0")
        return (len(errors) == 0, errors)


@dataclass
class Criterion:
    """Pass/fail verdict of one acceptance check"""
    name: str
    passed: bool
    detail: str = ""


@dataclass
class Series:
    """Plot series in long format (x, y and an optional band)"""
    name: str
    x: List[float]
    y: List[float]
    lo: Optional[List[float]] = None
    hi: Optional[List[float]] = None

    def __post_init__(self):
        if len(self.x) != len(self.y):
            raise ValueError(f"series {self.name}: x and y lengths differ")

    def rows(self) -> List[Tuple[str, float, float, Optional[float], Optional[float]]]:
        lo = self.lo or [None] * len(self.x)
        hi = self.hi or [None] * len(self.x)
        return list(zip([self.name] * len(self.x), self.x, self.y, lo, hi))


def to_jsonable(value: Any) -> Any:
    """Convert results (numpy values, windows, enums, dataclasses) to plain JSON types"""
    if hasattr(value, "to_dict"):
        return to_jsonable(value.to_dict())
    if isinstance(value, Window):
        return [value.lo, value.hi]
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, Path):
        return str(value)
    if is_dataclass(value) and not isinstance(value, type):
        return to_jsonable(asdict(value))
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


@dataclass
class ExperimentReport:
    """Outcome of one run

    Attributes:
        kind: Experiment kind
        name: Run name
        version: Tool version that produced it
        config: Configuration echo (enough to reproduce the run)
        results: Estimates
        criteria: Pass/fail verdicts
        series: Plot series
        started: Start timestamp (timing field)
        wall_clock_seconds: Run duration (timing field)
    """
    kind: str
    name: str
    version: str
    config: Dict[str, Any]
    results: Dict[str, Any] = field(default_factory=dict)
    criteria: List[Criterion] = field(default_factory=list)
    series: List[Series] = field(default_factory=list)
    started: Optional[str] = None
    wall_clock_seconds: Optional[float] = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.criteria)

    def get_result(self, key: str) -> Any:
        """Look up a dotted key in the JSON form of the results"""
        node: Any = to_jsonable(self.results)
        for part in key.split("."):
            if isinstance(node, dict) and part in node:
                node = node[part]
            elif isinstance(node, list) and part.lstrip("-").isdigit():
                node = node[int(part)]
            else:
                return None
        return node

    def to_dict(self, include_timing: bool = True) -> Dict[str, Any]:
        out = {
            "kind": self.kind,
            "name": self.name,
            "version": self.version,
            "config": to_jsonable(self.config),
            "results": to_jsonable(self.results),
            "criteria": [asdict(c) for c in self.criteria],
            "passed": self.passed,
            "series": [to_jsonable(asdict(s)) for s in self.series],
        }
        if include_timing:
            out["timing"] = {
                "started": self.started,
                "wall_clock_seconds": self.wall_clock_seconds,
            }
        return out

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentReport":
        timing = data.get("timing", {})
        return cls(
            kind=data["kind"],
            name=data["name"],
            version=data.get("version", ""),
            config=data.get("config", {}),
            results=data.get("results", {}),
            criteria=[Criterion(**c) for c in data.get("criteria", [])],
            series=[Series(**s) for s in data.get("series", [])],
            started=timing.get("started"),
            wall_clock_seconds=timing.get("wall_clock_seconds"),
        )
