from __future__ import annotations

import warnings

import pytest

from duio.builtin import BUILTINS, builtin_scenario
from duio.sim import design_scenario

SCENARIOS = tuple(BUILTINS)
MODES = ("detectability", "observability")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")
    config._criteria = {}


def pytest_runtest_logreport(report):
    item_marker = getattr(report, "criterion", None)
    if item_marker is None:
        return
    number, title = item_marker
    table = report.config_criteria
    ok = report.passed or report.outcome == "skipped"
    if report.when == "call" or not report.passed:
        prev = table.get(number, (title, True))
        table[number] = (title, prev[1] and ok)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        report.criterion = tuple(marker.args)
        report.config_criteria = item.config._criteria


def pytest_terminal_summary(terminalreporter, config):
    table = config._criteria
    if not table:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(table):
        title, ok = table[number]
        terminalreporter.write_line(f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}")


_designs: dict = {}


@pytest.fixture(scope="session")
def design_of():
    """Cached synthesis for (scenario id, mode, pole placement?)."""

    def get(name: str, mode: str | None = None, poles=None):
        sc = builtin_scenario(name)
        mode = mode or sc.decomposition_mode
        key = (name, mode, None if poles is None else tuple(poles))
        if key not in _designs:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                _designs[key] = design_scenario(sc, mode=mode, poles=poles)
        return _designs[key]

    return get
