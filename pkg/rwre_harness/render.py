"""Run summary renderer

Renders a human-readable Markdown summary of an ExperimentReport.
"""

from pathlib import Path
from typing import Any, List, Optional, Tuple, Union

from jinja2 import Environment, FileSystemLoader, select_autoescape

from rwre_harness.model import ExperimentReport, to_jsonable

# Longest list shown inline in the summary
MAX_INLINE_ITEMS = 12


def _flatten(node: Any, prefix: str = "") -> List[Tuple[str, Any]]:
    """Dotted (key, value) rows of a JSON tree; long lists are summarized"""
    if isinstance(node, dict):
        rows = []
        for key in sorted(node):
            rows.extend(_flatten(node[key], f"{prefix}.{key}" if prefix else str(key)))
        return rows
    if isinstance(node, list) and len(node) > MAX_INLINE_ITEMS:
        return [(prefix, f"[{len(node)} values]")]
    return [(prefix, node)]


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    if value is None:
        return "n/a"
    return str(value)


class SummaryRenderer:
    """Render ExperimentReport summaries

    Uses Jinja2 templates so the summary layout can be changed without
    touching the runner.
    """

    def __init__(self, template_dir: Optional[Union[str, Path]] = None):
        """Initialize renderer

        Args:
            template_dir: Directory containing Jinja2 templates (optional)
        """
        if template_dir is None:
            template_dir = Path(__file__).parent / "templates"

        self.template_dir = Path(template_dir)

        self.env = Environment(
            loader=FileSystemLoader(str(self.template_dir)),
            autoescape=select_autoescape(),
            trim_blocks=True,
            lstrip_blocks=True,
        )
        self.env.filters["fmt"] = _fmt

    def render(self, report: ExperimentReport, include_timing: bool = True) -> str:
        """Render the Markdown summary of a report

        Args:
            report: Report to summarize
            include_timing: Show start time and wall clock

        Returns:
            Markdown text
        """
        template = self.env.get_template("summary.md.jinja2")
        return template.render(
            report=report,
            results=_flatten(to_jsonable(report.results)),
            seeds=to_jsonable(report.config.get("seeds", {})),
            include_timing=include_timing,
        )
