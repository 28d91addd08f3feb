from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

FIXTURES = Path(__file__).resolve().parent / "fixtures"


@pytest.fixture
def golden_dir():
    return FIXTURES / "golden"


_ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record one acceptance line: criterion(label, ok, detail)."""
    def record(label, ok, detail=""):
        _ACCEPTANCE.append((label, bool(ok), detail))
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in sorted(_ACCEPTANCE, key=lambda r: _sort_key(r[0])):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}  {detail}".rstrip())


def _sort_key(label):
    head = label.split()[0].rstrip(":")
    num = "".join(ch for ch in head if ch.isdigit())
    return (int(num) if num else 99, head)
