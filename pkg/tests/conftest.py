from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def run_cli(*args: str):
    from click.testing import CliRunner

    from ambiance.cli import main

    return CliRunner().invoke(main, [str(a) for a in args], catch_exceptions=False)


@pytest.fixture(scope="session")
def demo_run(tmp_path_factory):
    """A 12-place demo dataset and one full single-worker pipeline run over it."""
    from ambiance.demo import make_demo_dataset

    base = tmp_path_factory.mktemp("demo")
    data = make_demo_dataset(base / "data", n_places=12, size=48, seed=0)
    out = base / "out"
    res = run_cli("pipeline", data, "--out", out, "--workers", "1")
    assert res.exit_code == 0, res.output
    return data, out


# criterion number -> (passed, detail), filled in by the acceptance suite
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
