"""Shared fixtures: the worked two-variable example and its derived objects."""
from __future__ import annotations

from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from models import build_worked_example, build_shared_child_reconstruction, build_factored_product
from spnbn.bn import to_bn
from spnbn.normal_form import to_normal

DATA = Path(__file__).parent / "data"

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def worked():
    return build_worked_example()


@pytest.fixture
def worked_normal():
    """Normal form of the worked example (reconstruction of its drawing)."""
    return to_normal(build_worked_example())[0]


@pytest.fixture
def worked_bn(worked_normal):
    return to_bn(worked_normal)


@pytest.fixture
def factored_product():
    return build_factored_product()


@pytest.fixture
def shared_child_reconstruction():
    return build_shared_child_reconstruction()


@pytest.fixture
def data_dir():
    return DATA


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def criterion():
    """Record and print one pass/fail line, then fail the test if the check failed."""

    def _report(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return _report
