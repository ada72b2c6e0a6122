import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from linfcurves.euclid import (GENERIC, GEODESIC, QUADRATIC_SPLINE, EuclidBranch,
                               EuclideanExtremal, NaturalCubicSpline, boundary_residual,
                               branch_phi, eval_branch, hermite_cubic, j_infinity_euclid,
                               j_two, solve_euclid_bvp)
from linfcurves.integrator import ExtremalState, integrate
from linfcurves.manifolds import ManifoldId
from linfcurves.validation import BoundaryData


def _data(x0, x1, v0, v1, t0=0.0, t1=1.0):
    f = lambda a: np.asarray(a, dtype=float)  # noqa: E731
    return BoundaryData(f(x0), f(x1), f(v0), f(v1), t0, t1)


GENERIC_DATA = _data([0, 0], [1, 0.3], [0, 1], [1, 0], 0.0, 1.5)


def socp_min_max_acceleration(data, N=1200):
    """Oracle: best piecewise-constant acceleration on N cells (exact kinematics)."""
    T = data.duration
    h = T / N
    m = data.dim
    a = cp.Variable((N, m))
    mid = data.t1 - (data.t0 + h * (np.arange(N) + 0.5))
    cons = [h * cp.sum(a, axis=0) == data.v1 - data.v0,
            h * (mid @ a) == data.x1 - data.x0 - data.v0 * T]
    prob = cp.Problem(cp.Minimize(cp.max(cp.norm(a, 2, axis=1))), cons)
    prob.solve()
    return prob.value, a.value


def test_generic_branch_matches_convex_oracle():
    br = solve_euclid_bvp(GENERIC_DATA)
    assert br.tag == GENERIC
    assert boundary_residual(br, GENERIC_DATA) < 1e-9
    zopt, a = socp_min_max_acceleration(GENERIC_DATA)
    assert br.z == pytest.approx(zopt, rel=2e-3)
    # the oracle's acceleration directions follow (A + B t)/|A + B t|
    t = GENERIC_DATA.t0 + (np.arange(len(a)) + 0.5) * GENERIC_DATA.duration / len(a)
    acc = eval_branch(br, t)[2]
    assert np.median(np.linalg.norm(acc - a, axis=1)) < 2e-2
    # frozen value
    assert br.z == pytest.approx(1.4926906490101, rel=1e-9)


def test_quadratic_spline_branch_matches_convex_oracle():
    # dv and e parallel: the optimum is a C^1 quadratic spline
    data = _data([0, 0], [0.2, 0], [0, 0], [1, 0], 0.0, 1.0)
    br = solve_euclid_bvp(data)
    assert br.tag == QUADRATIC_SPLINE
    zopt, _ = socp_min_max_acceleration(data)
    assert br.z == pytest.approx(zopt, rel=1e-3)
    assert boundary_residual(br, data) < 1e-12
    assert data.t0 < br.t2 < data.t1


def test_geodesic_branch():
    data = _data([0, 0, 0], [1, 2, 3], [1, 2, 3], [1, 2, 3])
    br = solve_euclid_bvp(data)
    assert br.tag == GEODESIC
    assert br.z == 0
    assert j_infinity_euclid(br, span=(0, 1)) == 0.0
    assert np.all(branch_phi(br, [0.0, 0.5]) == 0)


def test_generic_second_derivative_by_finite_differences(rng):
    br = solve_euclid_bvp(GENERIC_DATA)
    t = rng.uniform(0.01, 1.49, 100)
    h = 1e-4
    pos = [eval_branch(br, t + k * h)[0] for k in (-2, -1, 0, 1, 2)]
    fd = (-pos[0] + 16 * pos[1] - 30 * pos[2] + 16 * pos[3] - pos[4]) / (12 * h**2)
    tau = (t - br.shift)[:, None]
    alpha, beta = np.linalg.norm(br.A), np.linalg.norm(br.B)
    exact = br.z * (br.A + br.B * tau) / np.sqrt(alpha**2 + beta**2 * tau**2)
    assert np.max(np.abs(fd - exact)) < 1e-6


def test_generic_branch_solves_extremal_ode():
    br = solve_euclid_bvp(GENERIC_DATA)
    x0, v0, _ = eval_branch(br, 0.0)
    X0 = br.A + br.B * (0.0 - br.shift)
    tr = integrate(ExtremalState(ManifoldId.euclidean(2), x0, v0, X0, br.B, br.z),
                   (0.0, 1.5), n_samples=301)
    assert np.max(np.abs(tr.position - eval_branch(br, tr.times)[0])) < 1e-8


def test_far_negative_times_are_stable():
    # the log term would cancel catastrophically without the asinh form
    br = EuclidBranch.generic([1e-3, 0], [0, 1.0], 1.0, [0, 0], [0, 0])
    pos, vel, acc = eval_branch(br, np.array([-50.0, -10.0]))
    assert np.all(np.isfinite(pos))
    assert np.allclose(np.linalg.norm(acc, axis=1), 1.0)


def test_branch_validation():
    with pytest.raises(ValueError):
        EuclidBranch.generic([1, 0], [2, 0], 1.0, [0, 0], [0, 0])
    with pytest.raises(ValueError):
        EuclidBranch("geodesic", [1, 0], [0, 0], [0, 0], [0, 0])
    with pytest.raises(ValueError):
        EuclidBranch.quadratic_spline([0, 0], 0.5, 1.0, [0, 0], [0, 0])
    # non-orthogonal A, B are canonicalized by shifting time
    br = EuclidBranch.generic([1, 1], [0, 1], 1.0, [0, 0], [0, 0])
    assert abs(br.A @ br.B) < 1e-15 and br.shift == pytest.approx(-1.0)


def test_hermite_cubic_is_never_better():
    for data in (GENERIC_DATA, _data([0, 0], [0.2, 0], [0, 0], [1, 0])):
        br = solve_euclid_bvp(data)
        herm = hermite_cubic(data)
        assert j_infinity_euclid(herm) >= br.z - 1e-9


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=8, max_size=8), st.floats(0.5, 3.0))
def test_fit_meets_boundary_conditions(vals, T):
    v = np.array(vals).reshape(4, 2)
    data = _data(v[0], v[1], v[2], v[3], 0.0, T)
    br = solve_euclid_bvp(data)
    assert boundary_residual(br, data) <= 1e-9 * max(1.0, np.abs(v).max())
    assert br.z <= j_infinity_euclid(hermite_cubic(data)) + 1e-7


def test_estimator_api():
    est = EuclideanExtremal(n_restarts=8)
    assert est.get_params() == {"n_restarts": 8, "tol": 1e-9, "random_state": 0}
    with pytest.raises(NotFittedError):
        est.predict([0.5])
    est.fit([0.0, 1.5], [[0, 0], [1, 0.3]], [[0, 1], [1, 0]])
    assert est.branch_.tag == GENERIC
    assert np.allclose(est.predict([0.0, 1.5]), [[0, 0], [1, 0.3]], atol=1e-9)
    twin = clone(est).set_params(random_state=0)
    assert twin.fit([0.0, 1.5], [[0, 0], [1, 0.3]], [[0, 1], [1, 0]]).z_ == est.z_
    with pytest.raises(ValueError):
        est.fit([1.0, 1.0], [[0, 0], [1, 0]], [[0, 1], [1, 0]])


def test_natural_cubic_spline_and_j2():
    sp = NaturalCubicSpline().fit([0, 1, 2], [[0, 0], [1, 1], [2, 0]])
    assert np.allclose(sp.predict([0, 1, 2]), [[0, 0], [1, 1], [2, 0]])
    assert np.allclose(sp.acceleration([0, 2]), 0)
    # x(t) = t, y = natural spline through (0,0),(1,1),(2,0): y'' = -3 t on [0,1]
    assert sp.j_inf_ == pytest.approx(3.0, rel=1e-6)
    assert sp.j2_ == pytest.approx(3.0, rel=1e-9)  # mean of 9 t^2 over [0, 1], mirrored
    assert j_two(sp.spline_) == sp.j2_
    with pytest.raises(ValueError, match="duplicate"):
        NaturalCubicSpline().fit([0, 1, 1], [[0, 0], [1, 1], [2, 0]])
