from pathlib import Path

import pytest

DATA = Path(__file__).parent / "data"

# criterion number -> (passed, message); filled by test_acceptance.py
ACCEPTANCE: dict = {}


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def minimal_obs_text():
    return (DATA / "minimal.obs").read_text()


@pytest.fixture
def sample_nav_text():
    return (DATA / "sample.nav").read_text()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, msg = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {msg}")
