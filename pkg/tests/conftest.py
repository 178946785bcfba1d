"""Shared test plumbing.

The acceptance tests record one verdict per criterion through the
``verdict`` fixture; the terminal summary then prints a compact
PASS/FAIL table so a full run ends with one line per criterion.
"""

import pytest

_VERDICTS: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def verdict():
    """Record and enforce a criterion verdict.

    Calling the returned function stores the line for the summary table
    and then asserts, so a failing criterion still shows up in the table
    with its measured numbers.
    """

    def record(criterion: str, ok: bool, detail: str) -> None:
        _VERDICTS[criterion] = (bool(ok), detail)
        assert ok, f"{criterion} failed: {detail}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(_VERDICTS):
        ok, detail = _VERDICTS[criterion]
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"{criterion} {status}: {detail}")
