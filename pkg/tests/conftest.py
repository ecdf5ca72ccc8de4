"""Shared fixtures: a verdict log that prints one line per acceptance check."""

import pytest


class _VerdictLog:
    def __init__(self):
        self.lines = []

    def add(self, number, ok, detail):
        word = "PASS" if ok else "FAIL"
        self.lines.append(f"criterion {number:02d} {word}  {detail}")


def pytest_configure(config):
    config._verdict_log = _VerdictLog()


@pytest.fixture(scope="session")
def verdicts(request):
    return request.config._verdict_log


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = getattr(config, "_verdict_log", None)
    if log is not None and log.lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(log.lines):
            terminalreporter.write_line(line)
