import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from linfcurves.euclid import eval_branch, natural_cubic_baseline, solve_euclid_bvp, \
    spline_trajectory
from linfcurves.integrator import ExtremalState, Trajectory, integrate
from linfcurves.manifolds import ManifoldId
from linfcurves.shooting import (FREE_END_VELOCITY, ShootingProblem, ShootingSolver, Unknowns,
                                 check_multipoint, residual, solve)
from linfcurves.validation import BoundaryData

from conftest import S2, sphere_example_state

GEN = ExtremalState(S2, [1, 0, 0], [0, 1, 0], [0.0, 0.5, 1.0], [0.3, -0.2, 0.4], 1.2)
T = 1.5


@pytest.fixture(scope="module")
def generator():
    return integrate(GEN, (0, T), n_samples=100)


@pytest.fixture(scope="module")
def problem(generator):
    y = generator.final_state
    bd = BoundaryData(GEN.x, y[:3], GEN.xdot, y[3:6], 0.0, T)
    return ShootingProblem(S2, bd)


def test_residual_self_consistency(problem):
    assert residual(problem, Unknowns(GEN.X, GEN.Xdot, GEN.z)) <= 1e-10


def test_residual_on_example_boundary_data():
    s = sphere_example_state()
    y = integrate(s, (0, 8), n_samples=2).final_state
    p = ShootingProblem(S2, BoundaryData(s.x, y[:3], s.xdot, y[3:6], 0.0, 8.0))
    u = Unknowns(s.X, s.Xdot, s.z).normalized()
    assert residual(p, u) <= 1e-8
    # nonzero sensitivity to z
    assert residual(p, Unknowns(u.X0, u.X0dot, u.z + 1e-3)) >= 1e-6


@settings(max_examples=20, deadline=None)
@given(st.floats(1e-3, 1e3))
def test_residual_scale_invariance(scale):
    y = integrate(GEN, (0, T), n_samples=2).final_state
    p = ShootingProblem(S2, BoundaryData(GEN.x, y[:3], GEN.xdot, y[3:6], 0.0, T))
    base = residual(p, Unknowns(GEN.X + 0.01, GEN.Xdot, 1.1))
    scaled = residual(p, Unknowns(scale * (GEN.X + 0.01), scale * GEN.Xdot, 1.1))
    assert scaled == pytest.approx(base, rel=1e-6, abs=1e-12)


def test_round_trip_sphere(problem, generator):
    res = solve(problem, n_samples=100)
    assert res.converged and res.residual <= 1e-6
    assert np.max(np.abs(res.solution.position - generator.position)) <= 1e-5
    assert res.unknowns.z == pytest.approx(GEN.z, rel=1e-6)
    assert res.diagnostics.z_drift <= 1e-6


def test_free_end_velocity(problem):
    p = ShootingProblem(S2, BoundaryData(problem.boundary.x0, problem.boundary.x1,
                                         problem.boundary.v0, None, 0.0, T),
                        variant=FREE_END_VELOCITY)
    res = solve(p, n_samples=100)
    assert res.converged
    assert np.linalg.norm(res.solution.field[-1]) <= 1e-8
    assert np.max(np.abs(res.solution.position[-1] - p.boundary.x1)) <= 1e-8


def test_euclid_shooting_matches_closed_form():
    bd = BoundaryData(np.zeros(2), np.array([1, 0.3]), np.array([0.0, 1]),
                      np.array([1.0, 0]), 0.0, 1.5)
    res = solve(ShootingProblem(ManifoldId.euclidean(2), bd), n_samples=101)
    assert res.converged
    br = solve_euclid_bvp(bd)
    assert res.unknowns.z == pytest.approx(br.z, rel=1e-6)
    assert np.max(np.abs(res.solution.position - eval_branch(br, res.solution.times)[0])) < 1e-6


def test_deterministic(problem):
    a = solve(problem, n_samples=10)
    b = solve(problem, n_samples=10)
    assert a.history == b.history
    assert np.array_equal(a.solution.states, b.solution.states)


def test_nonconvergence_reports_best_residual(problem):
    p = ShootingProblem(S2, problem.boundary, restarts=2, max_iterations=1, tol=1e-30)
    res = solve(p, n_samples=10)
    assert not res.converged
    assert res.residual == min(r for _, r in res.history)


def test_problem_validation(problem):
    bd = problem.boundary
    with pytest.raises(ValueError, match="not on sphere"):
        ShootingProblem(S2, BoundaryData(1.1 * bd.x0, bd.x1, bd.v0, bd.v1, 0, T))
    with pytest.raises(ValueError):
        ShootingProblem(ManifoldId.so3(), bd)
    with pytest.raises(ValueError):
        ShootingProblem(S2, BoundaryData(bd.x0, bd.x1, bd.v0, None, 0, T))
    with pytest.raises(ValueError):
        ShootingProblem(S2, bd, variant="both")
    with pytest.raises(ValueError):
        Unknowns(np.zeros(3), np.zeros(3), 1.0).normalized()


def test_estimator_api(problem, generator):
    est = ShootingSolver(n_samples=100)
    assert clone(est).get_params() == est.get_params()
    b = problem.boundary
    est.fit([0.0, T], [b.x0, b.x1], [b.v0, b.v1])
    assert est.converged_
    assert np.allclose(est.predict(generator.times[::10]), generator.position[::10], atol=1e-5)


def _track_sum():
    # two extremal segments glued at t = 1 with a new field and z
    a = integrate(GEN, (0, 1), n_samples=1001)
    y = a.final_state
    x, v = y[:3], y[3:6]
    X = np.cross(x, v) + 0.3 * v
    s2 = ExtremalState(S2, x, v, X, -(v @ X) * x + 0.2 * np.cross(x, X), 0.8)
    b = integrate(s2, (1, 2), n_samples=1001)
    parts = [(a, slice(None)), (b, slice(1, None))]
    t = np.concatenate([p.times[s] for p, s in parts])
    st_ = np.concatenate([np.hstack([p.position, p.velocity, p.acceleration])[s]
                          for p, s in parts])
    phi = np.concatenate([p.phi[s] for p, s in parts])
    return Trajectory(S2, "curve", t, st_, meta={"phi": phi})


def test_multipoint_track_sum_passes_every_segment():
    rep = check_multipoint(_track_sum(), [0, 1, 2])
    assert all(s["pass"] for s in rep["segments"])
    assert rep["any_segment_passes"]
    assert rep["segments"][0]["J_inf"] == pytest.approx(1.2)
    assert rep["segments"][1]["J_inf"] == pytest.approx(0.8)
    assert not rep["start_condition"] and not rep["end_condition"]


def test_multipoint_recovers_phi_without_field():
    tr = _track_sum()
    bare = Trajectory(S2, "curve", tr.times, tr.states)
    rep = check_multipoint(bare, [0, 1, 2])
    assert all(s["L_residual_max"] < 1e-3 for s in rep["segments"])


def test_multipoint_natural_spline():
    sp = natural_cubic_baseline([0, 1, 2], [[0, 0], [1, 1], [2, 0]])
    rep = check_multipoint(spline_trajectory(sp.spline_, n_samples=2001), [0, 1, 2])
    assert not rep["any_segment_passes"]
    assert all(s["z_drift"] > 0.5 for s in rep["segments"])


def test_multipoint_single_segment_is_the_plain_check(generator):
    tr = integrate(GEN, (0, T), n_samples=1501)
    rep = check_multipoint(tr, [0, T])
    assert len(rep["segments"]) == 1 and rep["segments"][0]["pass"]


def test_multipoint_errors(generator):
    with pytest.raises(ValueError, match="at least 2"):
        check_multipoint(generator, [0.5])
    with pytest.raises(ValueError, match="outside"):
        check_multipoint(generator, [0, 3])
    with pytest.raises(ValueError, match="increasing"):
        check_multipoint(generator, [1, 0.5])
