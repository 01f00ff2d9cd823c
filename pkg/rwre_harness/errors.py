# ABOUTME: Harness-level errors: bad configs, exhausted resource budgets and report output failures.
# ABOUTME: All derive from the library's RWREError so the CLI can catch one root.

from rwre_lab.errors import RWREError


class HarnessError(RWREError):
    """Root of harness errors"""


class ConfigError(HarnessError, ValueError):
    """Experiment configuration failed schema or semantic validation

    Attributes:
        field: Dotted path of the offending field ("<root>" for the document)
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class ResourceCap(HarnessError):
    """A run would exceed its site-step budget"""


class ReportError(HarnessError, OSError):
    """A report or its plot data could not be written"""
