"""Shared test plumbing: the acceptance scoreboard.

Acceptance tests record one entry per check through the ``acceptance``
fixture; the terminal summary prints one verdict line per numbered
criterion and mirrors them into acceptance_report.txt next to this
directory.  Checks that are expected to fail at the stated scale (and
are marked xfail in the suite) show up as EXPECTED FAIL rather than
polluting the pass column.
"""

import os

_RECORDS = []


def _record(criterion, ok, detail, expected_fail=False):
    _RECORDS.append({"criterion": int(criterion), "ok": bool(ok),
                     "detail": str(detail),
                     "expected_fail": bool(expected_fail)})


import pytest


@pytest.fixture(scope="session")
def acceptance():
    """Callable (criterion, ok, detail, expected_fail=False)."""
    return _record


def _verdict(entries):
    if all(e["ok"] for e in entries):
        return "PASS"
    if all(e["ok"] or e["expected_fail"] for e in entries):
        return "EXPECTED FAIL"
    return "FAIL"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _RECORDS:
        return
    by_num = {}
    for r in _RECORDS:
        by_num.setdefault(r["criterion"], []).append(r)
    lines = []
    for num in sorted(by_num):
        entries = by_num[num]
        detail = "; ".join(e["detail"] for e in entries)
        lines.append(f"ACCEPTANCE {num:2d} {_verdict(entries):>13}  {detail}")
    terminalreporter.section("acceptance criteria")
    for line in lines:
        terminalreporter.write_line(line)
    path = os.path.join(os.path.dirname(os.path.dirname(__file__)),
                        "acceptance_report.txt")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
