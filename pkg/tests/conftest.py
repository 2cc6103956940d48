import sys

import numpy as np
import pytest

from fracball.constants import normalization_constant
from fracball.geometry import ProblemParams, build_graded_mesh, unit_ball
from fracball.greenop import assemble


@pytest.fixture(scope="session")
def small2():
    """N = 2, alpha = 1/2 mesh at resolution 16 with its matrix."""
    mesh = build_graded_mesh(unit_ball(2), 16)
    return mesh, assemble(mesh, 0.5)


@pytest.fixture(scope="session")
def small3():
    mesh = build_graded_mesh(unit_ball(3), 8)
    return mesh, assemble(mesh, 0.5)


@pytest.fixture(scope="session")
def cN2():
    return normalization_constant(2, 0.5)


@pytest.fixture
def params2():
    return ProblemParams(2, 0.5, 3.0, 0.2, 16)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        r = results[n]
        failed = [k for k, ok in r["checks"].items() if not ok]
        status = "PASS" if not failed else "FAIL"
        tail = f"  failed: {', '.join(failed)}" if failed else ""
        terminalreporter.write_line(f"{status}  criterion {n:2d}  {r['title']}  "
                                    f"({r['elapsed']:.1f} s){tail}")
