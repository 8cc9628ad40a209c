"""Shared fixtures: a seeded clock, a default config, and an agent factory."""

import sys

import pytest

from tiersched.agent import SchedulingAgent
from tiersched.clock import SimClock, utc
from tiersched.config import AgentConfig

START = utc(2026, 9, 3, 9, 0)


@pytest.fixture
def clock():
    return SimClock(START)


@pytest.fixture
def config():
    return AgentConfig()


@pytest.fixture
def make_agent(tmp_path):
    """Factory building agents over per-test state directories."""
    def build(name="agent", start=START, config=None):
        return SchedulingAgent(config or AgentConfig(), str(tmp_path / name),
                               SimClock(start))
    return build


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the acceptance criteria lines even when every test passes."""
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None) if module else None
    if results:
        terminalreporter.section("acceptance criteria")
        for line in results:
            terminalreporter.write_line(line)
