# ABOUTME: Inclusive integer site ranges and the light-cone arithmetic of nearest-neighbor dynamics.
# ABOUTME: A window [lo, hi] after T steps only determines the counts on [lo + T, hi - T].

from dataclasses import dataclass
from typing import Optional

import numpy as np

from rwre_lab.errors import WindowTooSmall


@dataclass(frozen=True)
class Window:
    """Inclusive range of lattice sites [lo, hi]"""
    lo: int
    hi: int

    def __post_init__(self):
        if self.hi < self.lo:
            raise WindowTooSmall(f"empty window [{self.lo}, {self.hi}]")

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1

    def sites(self) -> np.ndarray:
        """All sites of the window as an int64 array"""
        return np.arange(self.lo, self.hi + 1, dtype=np.int64)

    def contains(self, other: "Window") -> bool:
        return self.lo <= other.lo and other.hi <= self.hi

    def contains_site(self, x: int) -> bool:
        return self.lo <= x <= self.hi

    def pad(self, T: int) -> "Window":
        """Window needed at time 0 to know this window exactly at time T"""
        return Window(self.lo - T, self.hi + T)

    def shrink(self, T: int) -> "Window":
        """Region of this window still exact after T steps

        Raises:
            WindowTooSmall: If nothing of the window survives T steps
        """
        if self.hi - self.lo < 2 * T:
            raise WindowTooSmall(
                f"window [{self.lo}, {self.hi}] does not survive {T} steps"
            )
        return Window(self.lo + T, self.hi - T)

    def offset(self, x: int) -> int:
        """Array index of site x"""
        return x - self.lo

    def require(self, other: "Window", what: Optional[str] = None):
        """Raise WindowTooSmall unless other lies inside this window"""
        if not self.contains(other):
            label = what or "region"
            raise WindowTooSmall(
                f"{label} [{other.lo}, {other.hi}] is not covered by [{self.lo}, {self.hi}]"
            )

    def __str__(self) -> str:
        return f"[{self.lo}, {self.hi}]"
