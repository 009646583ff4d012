"""Shared pytest hooks.

The acceptance tests register one ``[PASS]``/``[FAIL]`` line per criterion;
printing from inside a test would be swallowed by pytest's capture, so the
lines are replayed here in a terminal-summary section, which runs with
capture disabled and therefore always reaches the console (and any tee).
"""

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
