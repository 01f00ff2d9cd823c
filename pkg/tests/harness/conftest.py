# ABOUTME: Shared harness fixtures: the fixtures directory, a parser and a builder for small configs.

from pathlib import Path

import pytest

from rwre_harness.parser import ConfigParser


@pytest.fixture
def fixtures_dir():
    """Directory of the JSON experiment fixtures"""
    return Path(__file__).parent / "fixtures"


@pytest.fixture
def parser():
    return ConfigParser()


@pytest.fixture
def make_config(parser, tmp_path):
    """Build an ExperimentConfig from a few fields, writing outputs under tmp_path"""

    def build(kind, params=None, law=None, seeds=None, **extra):
        doc = {
            "experiment": kind,
            "environment": law or {"law": "constant", "p": 0.75},
            "seeds": seeds or {"master": 0},
            "params": params or {},
            "output": {"dir": str(tmp_path / "out")},
        }
        doc.update(extra)
        return parser.parse_dict(doc)

    return build
