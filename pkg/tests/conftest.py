"""Shared pytest hooks.

The acceptance-criteria module records one human-readable verdict line per
criterion; echo them in the terminal summary so they are visible even when
output capture swallows in-test prints.
"""

import sys


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None) if module else None
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
