import re

import numpy as np
import pytest

from epimest import BoxDomain, EpiSpline, kuhn_triangulation

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_c(\d+)_(\w+)", report.nodeid)
    if m and (report.when == "call" or report.outcome != "passed"):
        key = int(m.group(1))
        if report.outcome != "passed" or key not in _ACCEPTANCE:
            _ACCEPTANCE[key] = (m.group(2), report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE):
        name, outcome = _ACCEPTANCE[key]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {key:2d} {name}: {verdict}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def unit_square():
    return BoxDomain([0.0, 0.0], [1.0, 1.0])


def random_spline(rng, dim=2, cells=3, scale=1.0):
    box = BoxDomain(np.zeros(dim), np.ones(dim))
    cx = kuhn_triangulation(box, cells)
    return EpiSpline(cx, scale * rng.normal(size=(cx.n_simplices, dim + 1)))
