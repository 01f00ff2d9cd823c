# ABOUTME: ResourceMeter - thread-safe site-step budget charged by experiments before they simulate.
# ABOUTME: Raises ResourceCap as soon as a charge would push usage past the configured limit.

import logging
from threading import Lock
from typing import List, Optional, Tuple

from rwre_harness.errors import ResourceCap

logger = logging.getLogger(__name__)


class ResourceMeter:
    """
    Tracks the site-steps a run has committed to.

    Experiments charge their estimated cost (replicas x sites x steps) before
    simulating, so an oversized run fails before any work is done.

    Example:
        meter = ResourceMeter(limit=1e6)
        meter.charge(200 * 1000, "walks")
        meter.remaining  # 800000.0
    """

    def __init__(self, limit: float):
        """
        Initialize ResourceMeter.

        Args:
            limit: Largest total charge allowed (site-steps)
        """
        if not limit > 0:
            raise ValueError(f"limit must be positive, got {limit}")
        self.limit = float(limit)
        self._lock = Lock()
        self._used = 0.0
        self._charges: List[Tuple[str, float]] = []

    def charge(self, amount: float, label: str = "") -> float:
        """
        Commit amount site-steps.

        Args:
            amount: Cost of the upcoming work
            label: What the cost is for (appears in errors and the ledger)

        Returns:
            Total usage after the charge

        Raises:
            ResourceCap: If the charge would exceed the limit (usage unchanged)
            ValueError: If amount is negative
        """
        if amount < 0:
            raise ValueError(f"charge must be >= 0, got {amount}")
        with self._lock:
            if self._used + amount > self.limit:
                raise ResourceCap(
                    f"{label or 'run'} needs {amount:.3g} site-steps; "
                    f"{self.limit - self._used:.3g} of {self.limit:.3g} left"
                )
            self._used += amount
            self._charges.append((label, float(amount)))
            logger.debug("charged %.3g site-steps for %s", amount, label or "run")
            return self._used

    @property
    def used(self) -> float:
        with self._lock:
            return self._used

    @property
    def remaining(self) -> float:
        with self._lock:
            return self.limit - self._used

    def ledger(self) -> List[Tuple[str, float]]:
        with self._lock:
            return list(self._charges)

    def reset(self, used: Optional[float] = None):
        """
        Reset usage.

        Args:
            used: New usage (default: 0)
        """
        with self._lock:
            self._used = float(used or 0.0)
            self._charges = []
