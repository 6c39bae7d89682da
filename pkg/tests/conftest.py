"""Shared fixtures and the acceptance summary printed at the end of a run."""

import pytest

RESULTS: dict = {}


class AcceptanceLog:
    def record(self, key: str, passed: bool, detail: str) -> None:
        RESULTS[key] = (passed, detail)


@pytest.fixture(scope="session")
def acceptance():
    return AcceptanceLog()


def _order(key: str):
    head = key.split()[0]
    num = "".join(ch for ch in head if ch.isdigit())
    return (int(num) if num else 99, key)


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(RESULTS, key=_order):
        passed, detail = RESULTS[key]
        tag = "PASS" if passed is True else ("FAIL" if passed is False else "INFO")
        terminalreporter.write_line(f"[{tag}] criterion {key}: {detail}")
