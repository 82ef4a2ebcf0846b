from __future__ import annotations

from conftest import run_cli


def test_help_lists_commands():
    res = run_cli("--help")
    for name in ("extract", "aggregate", "cluster", "correlate", "predict", "compare", "pipeline", "validate", "demo"):
        assert name in res.output


def test_demo_command_is_deterministic(tmp_path):
    a = run_cli("demo", tmp_path / "a", "--places", "2", "--pictures", "3", "--size", "32")
    b = run_cli("demo", tmp_path / "b", "--places", "2", "--pictures", "3", "--size", "32")
    assert a.exit_code == b.exit_code == 0
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert len(files) == 8
    for rel in files:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_bad_options_are_usage_errors(tmp_path):
    assert run_cli("extract", tmp_path, "--k-candidates", "1,5").exit_code == 2
    assert run_cli("extract", tmp_path, "--k-candidates", "a").exit_code == 2
    assert run_cli("extract", tmp_path, "--workers", "0").exit_code == 2


def test_validate_missing_root(tmp_path):
    res = run_cli("validate", tmp_path / "nowhere")
    assert res.exit_code == 1 and "does not exist" in res.output


def test_empty_dataset_is_invalid(tmp_path):
    (tmp_path / "places").mkdir()
    res = run_cli("extract", tmp_path, "--out", tmp_path / "out")
    assert res.exit_code == 1 and "no place directories" in res.output
