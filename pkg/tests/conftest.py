"""Shared fixtures and the acceptance summary printed at the end of a run."""
from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

#: Acceptance outcomes recorded by tests/test_acceptance.py, keyed by criterion.
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def record_acceptance():
    def record(criterion: str, passed: bool, detail: str):
        ACCEPTANCE[criterion] = (bool(passed), detail)
        return passed
    return record


@pytest.fixture(autouse=True)
def _isolated_runs(tmp_path, monkeypatch):
    monkeypatch.setenv("SLOWVOTER_RUNS", str(tmp_path / "runs"))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[1:])):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key} {'PASS' if ok else 'FAIL'}: {detail}")
