import numpy as np
import pytest
from hypothesis import settings

from plqopt import qp
from plqopt.polyhedra import Polyhedron

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the jitted kernels once so timed tests measure solves only."""
    qp.solve(qp.QpProblem(np.eye(2), np.ones(2), Polyhedron.cube(2)))
    from plqopt import second_order as so
    so.tilt_oracle_1d(so.plq_1d(-1.0, 1.0, 0.0), 0.0, delta=0.01, step=1e-3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_CRITERIA = {}


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when not in ("setup", "call"):
        return
    number, title = mark.args
    failed = call.excinfo is not None and not call.excinfo.errisinstance(pytest.skip.Exception)
    prev = _CRITERIA.get(number, (title, True, 0.0))
    _CRITERIA[number] = (title, prev[1] and not failed, prev[2] + call.duration)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok, secs = _CRITERIA[number]
        terminalreporter.write_line(f"AC{number:>3}  {'PASS' if ok else 'FAIL'}  {title}  ({secs:.1f} s)")
