from __future__ import annotations

from pathlib import Path

import pytest

from conegreen import load_model

DATA = Path(__file__).parent / "data"

_criteria: dict[str, str] = {}


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def m0():
    return load_model(DATA / "m0.json")


@pytest.fixture(scope="session")
def m1():
    return load_model(DATA / "m1.json")


@pytest.fixture(scope="session")
def m1_rev():
    return load_model(DATA / "m1_reversed_complement.json")


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _criteria[name] = "PASS" if report.outcome == "passed" else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_criteria, key=lambda s: int(s.split("_")[2])):
        num = name.split("_")[2]
        label = " ".join(name.split("_")[3:])
        terminalreporter.write_line(f"criterion {num} ({label}): {_criteria[name]}")
