"""Experiment configuration parser

Parses a JSON experiment document into an ExperimentConfig.

Document layout:
- experiment: experiment kind (speed, lln, slowdown, ...)
- name: run name (defaults to the file stem, then to the kind)
- environment: site law (two_point | discrete | constant | truncated), c, optional seed
- seeds: master (mandatory), mode (quenched | averaged), replicas
- params: experiment-specific parameters; laws, profiles, test functions and
  windows inside it are converted to library objects
- expect: {"dotted.result.key": {"value", "tol", "min", "max"}} regression checks
- output: dir, optional stem
- limits: site_steps budget

The document is checked against SCHEMA with jsonschema before any object is
built, so schema errors always name the offending field.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from jsonschema import Draft202012Validator

from rwre_harness.errors import ConfigError
from rwre_harness.model import (
    DEFAULT_SITE_STEPS,
    EXPERIMENT_KINDS,
    ExperimentConfig,
    Expectation,
)
from rwre_lab.environment import (
    EnvironmentSpec,
    TruncatedContinuous,
    compute_invariants,
    discrete,
    two_point,
)
from rwre_lab.errors import RWREError
from rwre_lab.particles import (
    DeterministicConstant,
    Indicator,
    InitialLaw,
    PiecewiseLinear,
    PoissonConstant,
    ProfileSpec,
    QuantileProduct,
    StationaryPoisson,
    TestFunction,
    triangle,
)
from rwre_lab.rng import SeedMode, SeedPolicy
from rwre_lab.window import Window

logger = logging.getLogger(__name__)

_NUMBER = {"type": "number"}
_PAIR = {"type": "array", "items": _NUMBER, "minItems": 2, "maxItems": 2}
_SEED = {"type": "integer", "minimum": 0, "maximum": 2**64 - 1}
_INT = {"type": "integer"}
_COUNT = {"type": "integer", "minimum": 1}
_STEPS = {"type": "integer", "minimum": 0}
_POSITIVE = {"type": "number", "exclusiveMinimum": 0}
_NONNEGATIVE = {"type": "number", "minimum": 0}
_FRACTION = {"type": "number", "minimum": 0, "maximum": 1}
_FLAG = {"type": "boolean"}
_TIMES = {"type": "array", "items": _STEPS, "minItems": 1}

# typed params per experiment kind; structured entries (laws, windows,
# profiles, test functions) are checked when they are converted
PARAMS_SCHEMAS: Dict[str, Dict[str, Any]] = {
    "speed": {"n": _COUNT, "start": _INT, "z_max": _POSITIVE},
    "lln": {
        "A": _NUMBER, "B": _NUMBER, "n": _COUNT, "particles_per_site": _COUNT,
        "master_seeds": _COUNT, "threshold": _POSITIVE, "required_fraction": _FRACTION,
    },
    "slowdown": {
        "ns": {"type": "array", "items": _COUNT, "minItems": 1}, "v": _NUMBER,
        "v_fraction": _NUMBER, "free_fit": _FLAG, "exponent_band": _NONNEGATIVE,
    },
    "hitting": {
        "n": _COUNT, "mu": _POSITIVE, "starts": {"type": "array", "items": _INT, "minItems": 1},
        "cap": _COUNT, "max_probability": _FRACTION,
        "backtrack_measure": {"enum": ["below_start", "drawdown"]},
    },
    "stationary": {
        "alpha": _POSITIVE, "T": _STEPS, "times": _TIMES, "batches": _COUNT,
        "level": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "z_max": _POSITIVE, "rejection_band": _NONNEGATIVE,
    },
    "converge": {
        "ns": _TIMES, "site": _INT, "alpha": {"anyOf": [_POSITIVE, {"const": "auto"}]},
        "final_tv_max": _FRACTION, "mean_check": _FLAG, "mean_replicas": _COUNT, "z_max": _POSITIVE,
    },
    "couple": {
        "T": _STEPS, "coupled_checks": _STEPS, "shared_config_seeds": _FLAG,
        "monotone_k": _POSITIVE, "drift_max": _POSITIVE, "min_reduction": _FRACTION,
    },
    "hydro": {
        "N": {"oneOf": [_COUNT, {"type": "array", "items": _COUNT, "minItems": 1}]},
        "t": _POSITIVE, "master_seeds": _COUNT, "rounding": {"enum": ["poisson", "floor"]},
        "error_max": _POSITIVE, "required_fraction": _FRACTION,
    },
    "meet": {"y": _INT, "z": _INT, "horizon": _COUNT, "crosscheck": _FLAG, "min_fraction": _FRACTION},
    "f-check": {"tol": _NONNEGATIVE, "mean_rel_tol": _NONNEGATIVE},
    "invariants": {"s_tol": _NONNEGATIVE},
}

SCHEMA: Dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["experiment", "environment", "seeds"],
    "additionalProperties": False,
    "properties": {
        "experiment": {"enum": list(EXPERIMENT_KINDS)},
        "name": {"type": "string", "minLength": 1},
        "description": {"type": "string"},
        "environment": {
            "type": "object",
            "required": ["law"],
            "properties": {
                "law": {"enum": ["two_point", "discrete", "constant", "truncated"]},
                "values": _PAIR,
                "prob": {"type": "number", "minimum": 0, "maximum": 1},
                "p": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "atoms": {"type": "array", "items": _PAIR, "minItems": 1},
                "distribution": {"type": "string"},
                "params": {"type": "object", "additionalProperties": _NUMBER},
                "c": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.5},
                "seed": _SEED,
            },
            "additionalProperties": False,
        },
        "seeds": {
            "type": "object",
            "required": ["master"],
            "properties": {
                "master": _SEED,
                "mode": {"enum": [m.value for m in SeedMode]},
                "replicas": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "params": {"type": "object"},
        "expect": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "properties": {
                    "value": _NUMBER,
                    "tol": {"type": "number", "minimum": 0},
                    "min": _NUMBER,
                    "max": _NUMBER,
                },
                "additionalProperties": False,
            },
        },
        "output": {
            "type": "object",
            "properties": {
                "dir": {"type": "string"},
                "stem": {"type": "string", "minLength": 1},
            },
            "additionalProperties": False,
        },
        "limits": {
            "type": "object",
            "properties": {"site_steps": {"type": "number", "exclusiveMinimum": 0}},
            "additionalProperties": False,
        },
    },
    "allOf": [
        {
            "if": {"properties": {"experiment": {"const": kind}}, "required": ["experiment"]},
            "then": {"properties": {"params": {"type": "object", "properties": props}}},
        }
        for kind, props in PARAMS_SCHEMAS.items()
    ],
}

# params entries converted to library objects
_LAW_PARAMS = ("law", "law_eta", "law_zeta")
_WINDOW_PARAMS = ("window", "observe", "probes")


def _field_path(error) -> str:
    """Dotted path of the field a jsonschema error is about"""
    path = [str(p) for p in error.absolute_path]
    if error.validator == "required":
        missing = [name for name in error.validator_value if name not in error.instance]
        named = [name for name in missing if repr(name) in error.message]
        path.extend((named or missing)[:1])
    elif error.validator == "additionalProperties" and isinstance(error.instance, dict):
        allowed = error.schema.get("properties", {})
        extra = [name for name in error.instance if name not in allowed]
        path.extend(extra[:1])
    return ".".join(path) or "<root>"


class ConfigParser:
    """Parser for experiment JSON documents

    Converts a JSON document into an ExperimentConfig. Every failure is a
    ConfigError whose field attribute names the offending entry.
    """

    def __init__(self):
        """Initialize parser"""
        self.validator = Draft202012Validator(SCHEMA)

    def _get_prop(self, obj: Dict[str, Any], prop_name: str, default: Any = None) -> Any:
        """Get property, accepting hyphenated spellings of underscored names

        Args:
            obj: Object dictionary
            prop_name: Property name
            default: Default value if not found

        Returns:
            Property value or default
        """
        if prop_name in obj:
            return obj[prop_name]
        hyphenated = prop_name.replace("_", "-")
        if hyphenated in obj:
            return obj[hyphenated]
        return default

    def schema_errors(self, data: Dict[str, Any]) -> List[ConfigError]:
        """All schema violations of a document, ordered by field path"""
        errors = sorted(self.validator.iter_errors(data), key=lambda e: list(map(str, e.absolute_path)))
        return [ConfigError(_field_path(e), e.message) for e in errors]

    def parse_file(self, config_path: Union[str, Path]) -> ExperimentConfig:
        """Parse experiment JSON file into ExperimentConfig

        Args:
            config_path: Path to the JSON document

        Returns:
            ExperimentConfig with source set and name defaulting to the file stem

        Raises:
            ConfigError: If the file is missing, not JSON or invalid
        """
        path = Path(config_path)
        if not path.exists():
            raise ConfigError("<file>", f"config file not found: {config_path}")
        try:
            with open(path, "r") as f:
                data = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"{path} is not valid JSON: {exc}") from exc
        if isinstance(data, dict) and "name" not in data:
            data = dict(data, name=path.stem)
        config = self.parse_dict(data)
        config.source = path
        return config

    def parse_dict(self, data: Dict[str, Any]) -> ExperimentConfig:
        """Parse experiment document from dictionary

        Args:
            data: Decoded JSON document

        Returns:
            ExperimentConfig

        Raises:
            ConfigError: On the first schema or semantic violation
        """
        if not isinstance(data, dict):
            raise ConfigError("<root>", "experiment document must be a JSON object")
        errors = self.schema_errors(data)
        if errors:
            for err in errors[1:]:
                logger.debug("additional config error: %s", err)
            raise errors[0]

        kind = data["experiment"]
        spec = self.parse_environment(data["environment"])
        seeds = data["seeds"]
        policy = SeedPolicy(
            mode=SeedMode(self._get_prop(seeds, "mode", SeedMode.QUENCHED.value)),
            replicas=int(self._get_prop(seeds, "replicas", 1)),
            master_seed=int(seeds["master"]),
            env_seed=self._get_prop(data["environment"], "seed"),
        )
        params = self.parse_params(self._get_prop(data, "params", {}), spec)
        expect = [
            Expectation(key=key, **check)
            for key, check in sorted(self._get_prop(data, "expect", {}).items())
        ]
        output = self._get_prop(data, "output", {})
        limits = self._get_prop(data, "limits", {})

        config = ExperimentConfig(
            kind=kind,
            name=self._get_prop(data, "name", kind),
            environment=spec,
            seeds=policy,
            params=params,
            expect=expect,
            output_dir=Path(self._get_prop(output, "dir", "results")),
            stem=self._get_prop(output, "stem"),
            site_step_limit=float(self._get_prop(limits, "site_steps", DEFAULT_SITE_STEPS)),
            raw=data,
        )
        is_valid, problems = config.validate()
        if not is_valid:
            field, _, message = problems[0].partition(": ")
            raise ConfigError(field, message)
        logger.debug("parsed %s experiment '%s'", kind, config.name)
        return config

    # -- blocks -------------------------------------------------------------

    def parse_environment(self, block: Dict[str, Any]) -> EnvironmentSpec:
        """Build the EnvironmentSpec of an environment block

        Raises:
            ConfigError: If the law parameters are missing or invalid
        """
        law = block["law"]
        c = self._get_prop(block, "c")
        try:
            if law == "two_point":
                values = self._require(block, "values", "environment")
                prob = self._require(block, "prob", "environment")
                return two_point(values[0], values[1], prob, c)
            if law == "constant":
                p = self._require(block, "p", "environment")
                return discrete([(p, 1.0)], c)
            if law == "discrete":
                return discrete(self._require(block, "atoms", "environment"), c)
            distribution = self._require(block, "distribution", "environment")
            if c is None:
                raise ConfigError("environment.c", "truncated laws need an ellipticity constant")
            params = tuple(sorted(self._get_prop(block, "params", {}).items()))
            return EnvironmentSpec(TruncatedContinuous(distribution, params), c)
        except RWREError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError("environment", str(exc)) from exc

    def parse_law(
        self,
        block: Dict[str, Any],
        field: str,
        spec: Optional[EnvironmentSpec] = None,
        paired: Optional[InitialLaw] = None,
    ) -> InitialLaw:
        """Build an initial law from {"kind": ..., ...}

        A stationary law may give alpha as "auto": alpha becomes v_P times the
        averaged density of the paired law.
        """
        if not isinstance(block, dict) or "kind" not in block:
            raise ConfigError(field, "law must be an object with a 'kind'")
        kind = block["kind"]
        try:
            if kind == "constant":
                return DeterministicConstant(int(self._require(block, "k", field)))
            if kind == "poisson":
                return PoissonConstant(float(self._require(block, "lam", field)))
            if kind == "stationary":
                alpha = self._require(block, "alpha", field)
                if alpha == "auto":
                    if paired is None or spec is None:
                        raise ConfigError(f"{field}.alpha", "'auto' needs a paired law")
                    alpha = compute_invariants(spec).speed * paired.averaged_mean(spec)
                    logger.info("%s: alpha auto = %.6g", field, alpha)
                tol = self._get_prop(block, "tol")
                if tol is None:
                    return StationaryPoisson(float(alpha))
                return StationaryPoisson(float(alpha), float(tol))
            if kind == "quantile":
                rows = self._require(block, "table", field)
                table = tuple(
                    (float(row["omega"]), tuple(float(p) for p in row["pmf"])) for row in rows
                )
                return QuantileProduct(table, int(self._get_prop(block, "support_cap", 64)))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(field, str(exc)) from exc
        except RWREError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(field, str(exc)) from exc
        raise ConfigError(f"{field}.kind", f"unknown law kind '{kind}'")

    def parse_profile(self, block: Dict[str, Any], field: str = "params.profile") -> ProfileSpec:
        """Build a macroscopic profile (indicator or piecewise-linear)"""
        kind = block.get("kind") if isinstance(block, dict) else None
        try:
            if kind == "indicator":
                return Indicator(
                    float(self._require(block, "a", field)),
                    float(self._require(block, "b", field)),
                    float(self._get_prop(block, "height", 1.0)),
                )
            if kind == "piecewise":
                return self._piecewise(block, field)
        except RWREError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(field, str(exc)) from exc
        raise ConfigError(f"{field}.kind", f"unknown profile kind '{kind}'")

    def parse_test_function(self, block: Dict[str, Any], field: str) -> TestFunction:
        """Build a test function (triangle or piecewise-linear)"""
        kind = block.get("kind") if isinstance(block, dict) else None
        try:
            if kind == "triangle":
                return triangle(
                    float(self._require(block, "a", field)),
                    float(self._require(block, "b", field)),
                    self._get_prop(block, "peak"),
                    float(self._get_prop(block, "height", 1.0)),
                )
            if kind == "piecewise":
                return self._piecewise(block, field)
        except RWREError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(field, str(exc)) from exc
        raise ConfigError(f"{field}.kind", f"unknown test function kind '{kind}'")

    def parse_window(self, value: Any, field: str) -> Window:
        """[lo, hi] -> Window"""
        if not (isinstance(value, (list, tuple)) and len(value) == 2
                and all(isinstance(v, int) for v in value)):
            raise ConfigError(field, "window must be [lo, hi] integers")
        try:
            return Window(int(value[0]), int(value[1]))
        except RWREError as exc:
            raise ConfigError(field, str(exc)) from exc

    def parse_params(self, params: Dict[str, Any], spec: EnvironmentSpec) -> Dict[str, Any]:
        """Convert structured params entries to library objects; others pass through"""
        out = dict(params)
        for name in _WINDOW_PARAMS:
            if name in out:
                out[name] = self.parse_window(out[name], f"params.{name}")
        paired = None
        for name in _LAW_PARAMS:
            if name in out:
                out[name] = self.parse_law(out[name], f"params.{name}", spec, paired)
                paired = out[name]
        if "profile" in out:
            out["profile"] = self.parse_profile(out["profile"])
        if "test_functions" in out:
            blocks = out["test_functions"]
            if not isinstance(blocks, list) or not blocks:
                raise ConfigError("params.test_functions", "needs a non-empty list")
            out["test_functions"] = [
                self.parse_test_function(b, f"params.test_functions.{i}")
                for i, b in enumerate(blocks)
            ]
        return out

    # -- helpers ------------------------------------------------------------

    def _piecewise(self, block: Dict[str, Any], field: str) -> PiecewiseLinear:
        knots = self._require(block, "knots", field)
        return PiecewiseLinear(tuple((float(x), float(y)) for x, y in knots))

    def _require(self, block: Dict[str, Any], name: str, field: str) -> Any:
        value = self._get_prop(block, name)
        if value is None:
            raise ConfigError(f"{field}.{name}", "required")
        return value
