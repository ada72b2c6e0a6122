import numpy as np
import pytest

from linfcurves.integrator import ExtremalState, SO3ReducedState, integrate
from linfcurves.manifolds import ManifoldId

S2 = ManifoldId.sphere(2)

# initial data of the sphere and SO(3) worked examples
SPHERE_EXAMPLE = dict(x=[1.0, 0.0, 0.0], xdot=[0.0, 1.0, 0.0], X=[0.0, 1.0, 200.0],
                      Xdot=[-1.0, 2.0, 1.0], z=1.2)
SO3_EXAMPLE = dict(V=[1.0, 2.0, 3.0], W=[-1.0, -4.0, 6.0], z=1.2, C=[-2.0, -1.0, 0.0])


def sphere_example_state():
    return ExtremalState(S2, **SPHERE_EXAMPLE)


def so3_example_state(C=None):
    d = dict(SO3_EXAMPLE)
    if C is not None:
        d["C"] = C
    return SO3ReducedState(**d)


@pytest.fixture(scope="session")
def sphere_run():
    """Sphere example on [0, 8] at grid 1e-3."""
    return integrate(sphere_example_state(), (0.0, 8.0), n_samples=8001)


@pytest.fixture(scope="session")
def so3_long_run():
    return integrate(so3_example_state(), (0.0, 700.0), n_samples=7001)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


# one summary line per acceptance criterion, filled in by test_acceptance
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
