"""Shared test plumbing: acceptance-criterion result registry.

The acceptance suite records one verdict per numbered criterion; the terminal
summary prints them as single pass/fail lines so the run's outcome can be read
without scrolling through pytest output.
"""

_RESULTS: dict[int, tuple[bool, str]] = {}


def record_criterion(num: int, passed: bool, detail: str):
    _RESULTS[num] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_RESULTS):
        passed, detail = _RESULTS[num]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"CRITERION {num}: {status} - {detail}")
