# ABOUTME: Base class for all experiments providing parameter checks, budgeting and result collection.
# ABOUTME: Separates experiment logic from persistence; the runner turns collected results into a report.

import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence

from rwre_harness.budget import ResourceMeter
from rwre_harness.model import Criterion, ExperimentConfig, Series

logger = logging.getLogger(__name__)


class Experiment:
    """
    Base class for all experiment kinds.

    Provides:
    - Access to the parsed ExperimentConfig (environment, seeds, params)
    - A ResourceMeter charged with the estimated cost before computing
    - Collection of criteria and plot series between compute() calls
    - Optional process-pool fan-out for independent work items

    Subclasses must implement compute() and normally estimate_cost().
    """

    kind: str = ""
    required_params: Sequence[str] = ()

    def __init__(
        self,
        config: ExperimentConfig,
        meter: Optional[ResourceMeter] = None,
        workers: int = 1,
    ):
        """
        Initialize experiment.

        Args:
            config: Parsed experiment configuration
            meter: Site-step budget (default: one sized by config.site_step_limit)
            workers: Worker processes for map() (1 runs inline)
        """
        self.config = config
        self.meter = meter or ResourceMeter(config.site_step_limit)
        self.workers = max(1, int(workers))
        self._state: Dict[str, Any] = {}

    @property
    def spec(self):
        return self.config.environment

    @property
    def policy(self):
        return self.config.seeds

    def compute(self, **params) -> Dict[str, Any]:
        """
        Compute experiment results from params.

        This is the main computation method that subclasses must override.
        Results are plain values or objects with to_dict(); criteria and
        series are recorded through check() and add_series().

        Args:
            **params: Experiment parameters (config.params)

        Returns:
            Dictionary of result names to values

        Raises:
            NotImplementedError: Must be implemented by subclass
        """
        raise NotImplementedError(
            f"{self.__class__.__name__}.compute() must be implemented"
        )

    def estimate_cost(self, **params) -> float:
        """Site-steps the run will simulate (0 for analytic experiments)"""
        return 0.0

    def execute(self) -> Dict[str, Any]:
        """
        Validate params, charge the budget and compute.

        Returns:
            Result dictionary

        Raises:
            ValueError: If required params are missing
            ResourceCap: If the estimated cost exceeds the remaining budget
        """
        params = dict(self.config.params)
        self._validate_params(self.required_params, params)
        self.reset_state()
        self.meter.charge(self.estimate_cost(**params), self.kind or self.__class__.__name__)
        return self.compute(**params)

    def reset_state(self):
        """
        Reset collected criteria and series.
        """
        self._state = {"criteria": [], "series": []}

    def _validate_params(self, required_params: Sequence[str], provided_params: dict):
        """
        Validate that all required params are provided.

        Args:
            required_params: List of required param names
            provided_params: Dictionary of provided params

        Raises:
            ValueError: If required params are missing
        """
        missing = set(required_params) - set(provided_params.keys())
        if missing:
            raise ValueError(
                f"{self.__class__.__name__} missing required params: {sorted(missing)}"
            )

    def check(self, name: str, passed: bool, detail: str = "") -> bool:
        """Record an acceptance criterion; returns passed"""
        self._state.setdefault("criteria", []).append(Criterion(name, bool(passed), detail))
        return bool(passed)

    def add_series(
        self,
        name: str,
        x: Iterable[float],
        y: Iterable[float],
        lo: Optional[Iterable[float]] = None,
        hi: Optional[Iterable[float]] = None,
    ):
        """Record a plot series"""
        self._state.setdefault("series", []).append(Series(
            name,
            [float(v) for v in x],
            [float(v) for v in y],
            None if lo is None else [float(v) for v in lo],
            None if hi is None else [float(v) for v in hi],
        ))

    @property
    def criteria(self) -> List[Criterion]:
        return list(self._state.get("criteria", []))

    @property
    def series(self) -> List[Series]:
        return list(self._state.get("series", []))

    def map(self, fn: Callable, items: Sequence) -> List:
        """
        Apply a picklable top-level function to every item, in order.

        Results come back in input order, so reductions over them are
        deterministic whatever the worker count.
        """
        items = list(items)
        if self.workers == 1 or len(items) < 2:
            return [fn(item) for item in items]
        workers = min(self.workers, len(items))
        logger.debug("fanning out %d items over %d workers", len(items), workers)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
