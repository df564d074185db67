import os
from collections import OrderedDict

import numpy as np
import pytest

os.environ.setdefault("OMP_NUM_THREADS", "1")

_CRITERIA: "OrderedDict[str, list]" = OrderedDict()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        label = f"criterion {marker.args[0]}"
        _CRITERIA.setdefault(label, []).append((item.name, report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for label, results in sorted(_CRITERIA.items(), key=lambda kv: int(kv[0].split()[1])):
        passed = sum(outcome == "passed" for _, outcome in results)
        verdict = "PASS" if passed == len(results) else "FAIL"
        tr.write_line(f"{verdict}  {label} ({passed}/{len(results)} checks)")
        for name, outcome in results:
            tr.write_line(f"        {outcome.upper():7s} {name}")
