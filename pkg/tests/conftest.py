"""Pytest hooks shared by the suite: after the run, print one line per
numbered acceptance criterion collected by tests/test_acceptance.py."""

import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    module = sys.modules.get("test_acceptance")
    registry = getattr(module, "ACCEPTANCE", None)
    if not registry:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(registry):
        entries = registry[number]
        status = "PASS" if all(ok for ok, _ in entries) else "FAIL"
        detail = "; ".join(text for _, text in entries)
        terminalreporter.write_line(f"criterion {number}: {status} - {detail}")
