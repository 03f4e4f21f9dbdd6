"""Shared test plumbing: the acceptance-criterion report channel.

The acceptance tests push one "CRITERION n PASS/FAIL - ..." line each; the
terminal-summary hook reprints them after the run so the gate's verdict is
visible without -s even when every test passes.
"""

import pytest

_criterion_lines = []


@pytest.fixture(scope="session")
def criterion_report():
    def note(line: str):
        _criterion_lines.append(line)
        print(line, flush=True)

    return note


def pytest_terminal_summary(terminalreporter, exitstatus):
    if _criterion_lines:
        terminalreporter.section("acceptance criteria")
        for line in _criterion_lines:
            terminalreporter.write_line(line)
