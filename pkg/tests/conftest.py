import shutil
import socket
import sys
import threading

import pytest

from malfam.errors import TransportError
from malfam.fixtures import FIXTURE_DIR, fixture_paths


class FakeProvider:
    """Instrumented provider: counts calls and tracks peak concurrency."""

    def __init__(self, reply=lambda judge, prompt: "Trojan", fail=False, delay=0.0, status=503):
        self.reply = reply
        self.fail = fail
        self.delay = delay
        self.status = status
        self.calls = 0
        self.in_flight = 0
        self.peak = 0
        self._lock = threading.Lock()

    def complete(self, judge, prompt):
        with self._lock:
            self.calls += 1
            self.in_flight += 1
            self.peak = max(self.peak, self.in_flight)
        try:
            if self.delay:
                threading.Event().wait(self.delay)
            if self.fail:
                raise TransportError(f"{judge.model_id}: HTTP {self.status}", status=self.status)
            return self.reply(judge, prompt)
        finally:
            with self._lock:
                self.in_flight -= 1


@pytest.fixture
def fake_provider():
    return FakeProvider


@pytest.fixture
def shipped_fixture(tmp_path):
    """Copy of the shipped fixture directory, safe to write into."""
    dest = tmp_path / "fixture"
    shutil.copytree(FIXTURE_DIR, dest)
    return fixture_paths(dest)


@pytest.fixture
def no_network(monkeypatch):
    """Any attempt to open a socket fails the test."""
    attempts = []

    def guard(*args, **kwargs):
        attempts.append(args)
        raise AssertionError("network access attempted")

    monkeypatch.setattr(socket, "socket", guard)
    monkeypatch.setattr(socket, "create_connection", guard)
    return attempts


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, elapsed in sorted(results):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'} ({elapsed:6.2f}s)  {title}")
