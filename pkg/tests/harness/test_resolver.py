# ABOUTME: Tests for ConfigResolver run-target resolution.

import pytest

from rwre_harness.resolver import ConfigResolver


class TestConfigResolver:
    """Test ConfigResolver"""

    @pytest.fixture
    def tree(self, tmp_path):
        (tmp_path / "sub").mkdir()
        (tmp_path / "a.json").write_text("{}")
        (tmp_path / "sub" / "b.json").write_text("{}")
        (tmp_path / "a.report.json").write_text("{}")
        (tmp_path / "notes.txt").write_text("")
        return tmp_path

    def test_single_file(self, tree):
        assert ConfigResolver().resolve(tree / "a.json") == [tree / "a.json"]

    def test_directory_skips_reports(self, tree):
        found = ConfigResolver().resolve(tree)
        assert found == [tree / "a.json", tree / "sub" / "b.json"]

    def test_search_paths(self, tree):
        resolver = ConfigResolver()
        resolver.add_search_path(tree)
        resolver.add_search_path(tree)
        assert len(resolver.search_paths) == 1
        assert resolver.resolve("b") == [tree.resolve() / "sub" / "b.json"]

    def test_nothing_found(self, tmp_path):
        assert ConfigResolver().resolve(tmp_path / "missing") == []

    def test_fixtures(self, fixtures_dir):
        names = [p.name for p in ConfigResolver().resolve(fixtures_dir)]
        assert "meet_constant.json" in names
        assert names[0] == "bad_kind.json"
