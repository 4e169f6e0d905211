"""Collects outcomes of tests marked ``acceptance(n)`` and prints one line per criterion."""

import collections

import pytest

_outcomes = collections.defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n): implements acceptance criterion n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        if hasattr(report, "wasxfail"):
            state = "xfail" if report.skipped else "xpass"
        else:
            state = report.outcome
        _outcomes[marker.args[0]].append((item.name, state))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_outcomes):
        states = [s for _, s in _outcomes[n]]
        if any(s in ("failed", "xpass") for s in states):
            verdict = "FAIL"
        elif all(s == "skipped" for s in states):
            verdict = "NOT REPRODUCED"
        else:
            verdict = "PASS"
        notes = [f"{name} {s}" for name, s in _outcomes[n] if s not in ("passed",)]
        extra = f"  [{'; '.join(notes)}]" if notes else ""
        tr.write_line(f"criterion {n:2d}: {verdict} ({len(states)} checks){extra}")
