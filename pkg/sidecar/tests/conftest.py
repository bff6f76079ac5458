"""Shared client fixture plus acceptance-criterion summary lines."""

import base64
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from inference_sidecar import create_app

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def client() -> TestClient:
    return TestClient(create_app())


@pytest.fixture(scope="session")
def golden_png_b64() -> str:
    return base64.b64encode((FIXTURES / "golden_input.png").read_bytes()).decode("ascii")


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(num, text): ties a test to one acceptance criterion"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when != "call":
        return
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        report.user_properties.append(("criterion", (marker.args[0], marker.args[1], report.outcome)))


def pytest_terminal_summary(terminalreporter):
    rows = []
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            for key, val in getattr(rep, "user_properties", []):
                if key == "criterion":
                    rows.append(val)
    if not rows:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num, text, outcome in sorted(rows, key=lambda r: r[0]):
        flag = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{flag}] criterion {num:>2}: {text}")
