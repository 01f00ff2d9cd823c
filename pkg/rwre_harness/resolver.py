"""Experiment config resolver for batch runs

This module finds experiment JSON documents for a run target: a single file
or a directory tree of configs.
"""

import logging
from pathlib import Path
from typing import List, Optional, Union

logger = logging.getLogger(__name__)

REPORT_SUFFIX = ".report.json"


class ConfigResolver:
    """Resolves run targets to experiment config files"""

    def __init__(self, search_paths: Optional[List[Path]] = None):
        """Initialize resolver with optional search paths

        Args:
            search_paths: Additional directories to look up bare config names in
        """
        self.search_paths = search_paths or []

    def resolve(self, target: Union[str, Path]) -> List[Path]:
        """Config files a run target stands for

        Searches in the following order:
        1. target itself if it is a file
        2. every *.json below target if it is a directory (reports excluded)
        3. {target}.json recursively in the additional search paths

        Args:
            target: File, directory or bare config name

        Returns:
            Sorted list of config paths (empty if nothing matched)
        """
        path = Path(target)
        if path.is_file():
            return [path]
        if path.is_dir():
            found = self._configs_below(path)
            logger.debug("resolved %d configs below %s", len(found), path)
            return found
        for search_path in self.search_paths:
            match = self._recursive_search(path.name, Path(search_path))
            if match:
                return [match]
        return []

    def _configs_below(self, root: Path) -> List[Path]:
        return sorted(
            p for p in root.glob("**/*.json")
            if p.is_file() and not p.name.endswith(REPORT_SUFFIX)
        )

    def _recursive_search(self, name: str, root: Path) -> Optional[Path]:
        """Recursively search for {name}.json in a directory tree

        Args:
            name: Config name, with or without .json
            root: Root directory to search from

        Returns:
            Path to the config if found, None otherwise
        """
        stem = name[:-5] if name.endswith(".json") else name
        matches = sorted(root.glob(f"**/{stem}.json"))
        return matches[0] if matches else None

    def add_search_path(self, path: Path):
        """Add a directory to the search paths

        Args:
            path: Directory to add to search paths
        """
        path = Path(path).resolve()
        if path.is_dir() and path not in self.search_paths:
            self.search_paths.append(path)
