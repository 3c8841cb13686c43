"""Collects one PASS/FAIL line per acceptance criterion and prints them at the end of the run."""

import contextlib
import time

import pytest

_LINES = {}


class _Record:
    def __init__(self):
        self.detail = ""


@pytest.fixture
def criterion():
    @contextlib.contextmanager
    def track(number: int, title: str):
        rec = _Record()
        start = time.perf_counter()
        status = "FAIL"
        try:
            yield rec
            status = "PASS"
        finally:
            secs = time.perf_counter() - start
            extra = f" | {rec.detail}" if rec.detail else ""
            line = f"{status} criterion {number:>2}: {title} ({secs:.1f}s){extra}"
            _LINES[number] = line
            print(line)

    return track


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_LINES):
        terminalreporter.write_line(_LINES[n])
