import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.linalg import expm

from linfcurves.manifolds import (ManifoldId, L_residual, check_rotation,
                                  covariant_derivative_samples, curvature_action, hat, inner,
                                  nearest_rotation, project_tangent, so3_curvature_action,
                                  so3_exp, sphere_curvature_action, time_derivative, vee)
from linfcurves.integrator import Trajectory

vec3 = arrays(np.float64, 3, elements=st.floats(-10, 10))


def test_manifold_id_roundtrip_and_dims():
    for m in (ManifoldId.euclidean(4), ManifoldId.sphere(2), ManifoldId.so3()):
        assert ManifoldId.from_dict(m.to_dict()) == m
    assert ManifoldId.sphere(2).ambient_dim == 3
    assert ManifoldId.euclidean(2).ambient_dim == 2
    with pytest.raises(ValueError):
        ManifoldId("so3", 2)
    with pytest.raises(ValueError):
        ManifoldId("torus", 2)


def test_inner_rejects_off_sphere_base():
    s2 = ManifoldId.sphere(2)
    assert inner(s2, [1, 0, 0], [0, 1, 2], [0, 3, 1]) == 5.0
    with pytest.raises(ValueError):
        inner(s2, [0.9, 0, 0], [0, 1, 0], [0, 1, 0])
    with pytest.raises(ValueError):
        inner(s2, [1, 0, 0], [0, 1], [0, 1, 0])


def _sectional(R, X, Y):
    return (R(X, Y, Y) @ X) / ((X @ X) * (Y @ Y) - (X @ Y) ** 2)


def test_sectional_curvatures(rng):
    # unit sphere: K = 1; bi-invariant SO(3): K = |X x Y|^2 / (4 |X ^ Y|^2) = 1/4
    x = rng.normal(size=4)
    x /= np.linalg.norm(x)
    X, Y = (project_tangent(ManifoldId.sphere(3), x, rng.normal(size=4)) for _ in range(2))
    assert _sectional(sphere_curvature_action, X, Y) == pytest.approx(1.0, rel=1e-12)
    X, Y = rng.normal(size=3), rng.normal(size=3)
    assert _sectional(so3_curvature_action, X, Y) == pytest.approx(0.25, rel=1e-12)
    assert np.all(curvature_action(ManifoldId.euclidean(3), X, Y, X) == 0)


@settings(max_examples=60, deadline=None)
@given(vec3, vec3, vec3, vec3)
def test_curvature_symmetries(X, Y, Z, W):
    for R in (sphere_curvature_action, so3_curvature_action):
        scale = 1 + np.abs(np.concatenate([X, Y, Z, W])).max() ** 4
        assert np.allclose(R(X, Y, Z), -R(Y, X, Z), atol=1e-12 * scale)
        bianchi = R(X, Y, Z) + R(Y, Z, X) + R(Z, X, Y)
        assert np.allclose(bianchi, 0, atol=1e-12 * scale)
        assert abs(R(X, Y, Z) @ W + R(X, Y, W) @ Z) <= 1e-11 * scale


@settings(max_examples=60, deadline=None)
@given(vec3)
def test_hat_vee_and_exp(w):
    u = np.array([0.3, -1.2, 0.7])
    assert np.allclose(hat(w) @ u, np.cross(w, u))
    assert np.allclose(vee(hat(w)), w)
    R = so3_exp(w)
    assert np.allclose(R, expm(hat(w)), atol=1e-12)
    check_rotation(R)


def test_exp_small_angle_branch():
    w = np.array([3e-9, -1e-9, 2e-9])
    assert np.allclose(so3_exp(w), expm(hat(w)), atol=1e-20)


def test_nearest_rotation_and_check():
    R = so3_exp([0.4, -0.2, 1.1])
    noisy = R + 1e-6 * np.arange(9).reshape(3, 3)
    assert np.linalg.norm(nearest_rotation(noisy) - R) < 2e-5
    check_rotation(nearest_rotation(-np.eye(3) + 1e-3))
    with pytest.raises(ValueError):
        check_rotation(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(ValueError):
        check_rotation(2 * np.eye(3))


def test_time_derivative_order():
    # fourth-order interior: halving h cuts the error by about 16
    errs = []
    for n in (101, 201):
        t = np.linspace(0, 1, n)
        d = time_derivative(t, np.sin(3 * t)[:, None])[:, 0]
        errs.append(np.max(np.abs(d - 3 * np.cos(3 * t))[2:-2]))
    assert 12 < errs[0] / errs[1] < 20


def test_great_circle_is_geodesic():
    s2 = ManifoldId.sphere(2)
    t = np.linspace(0, 2, 401)
    x = np.column_stack([np.cos(t), np.sin(t), 0 * t])
    v = np.column_stack([-np.sin(t), np.cos(t), 0 * t])
    acc = covariant_derivative_samples(s2, t, x, v, v)
    assert np.max(np.abs(acc[2:-2])) < 1e-9


def test_latitude_circle_acceleration():
    # x = (r cos t, r sin t, h): covariant acceleration is x'' + r^2 x = -r h (h cos, h sin, -r)
    s2 = ManifoldId.sphere(2)
    r, h = 0.6, 0.8
    t = np.linspace(0, 3, 601)
    x = np.column_stack([r * np.cos(t), r * np.sin(t), h + 0 * t])
    v = np.column_stack([-r * np.sin(t), r * np.cos(t), 0 * t])
    exact = -r * h * np.column_stack([h * np.cos(t), h * np.sin(t), -r + 0 * t])
    acc = covariant_derivative_samples(s2, t, x, v, v)
    assert np.max(np.abs(acc - exact)[2:-2]) < 1e-8
    assert np.allclose(np.linalg.norm(exact, axis=1), r * h)


def test_jacobi_field_in_kernel_of_L():
    s2 = ManifoldId.sphere(2)
    t = np.linspace(0, 3, 3001)
    x = np.column_stack([np.cos(t), np.sin(t), 0 * t])
    v = np.column_stack([-np.sin(t), np.cos(t), 0 * t])
    J = np.column_stack([0 * t, 0 * t, np.sin(t)])
    traj = Trajectory(s2, "curve", t, np.hstack([x, v, 0 * v]))
    assert L_residual(s2, traj, J).max() < 1e-9
    # a non-Jacobi field is not annihilated
    assert L_residual(s2, traj, np.column_stack([0 * t, 0 * t, t**2])).max() > 0.5


def test_L_residual_input_checks():
    s2 = ManifoldId.sphere(2)
    t = np.linspace(0, 1, 4)
    x = np.tile([1.0, 0, 0], (4, 1))
    traj = Trajectory(s2, "curve", t, np.hstack([x, 0 * x, 0 * x]))
    with pytest.raises(ValueError, match="at least 5"):
        L_residual(s2, traj, 0 * x)
