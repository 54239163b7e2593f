"""Per-criterion PASS/FAIL summary for the acceptance suite."""
from __future__ import annotations

import pytest

CRITERIA = {
    1: "teleported fidelity closed form vs matrix oracle",
    2: "stationary law vs generator solve, service probability vs simulation",
    3: "wait-time transforms vs quadrature and direct solves",
    4: "analytic vs simulated mean fidelity at the fig3 check points",
    5: "LIFO-PO optimality on finite instances and on common-seed simulations",
    6: "qualitative shape of the fig3 to fig6 preset sweeps",
    7: "corrections evidence emitted by compare",
    8: "LIFO-PO no-crossing properties on simulator traces",
}

_results: dict[int, list[tuple[str, str, list[str]]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = marker.args[0]


def pytest_runtest_logreport(report):
    number = getattr(report, "criterion", None)
    if number is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        details = [v for k, v in report.user_properties if k == "detail"]
        _results.setdefault(number, []).append((report.nodeid, report.outcome, details))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number, label in CRITERIA.items():
        runs = _results.get(number)
        if not runs:
            tr.write_line(f"criterion {number}: NOT RUN  {label}")
            continue
        ok = all(outcome == "passed" for _, outcome, _ in runs)
        tr.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {label}")
        for nodeid, outcome, details in runs:
            if outcome != "passed":
                tr.write_line(f"    {outcome}: {nodeid}")
            for d in details:
                tr.write_line(f"    {d}")
