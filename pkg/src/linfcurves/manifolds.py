"""Ambient-coordinate geometry for Euclidean space, unit spheres and SO(3).

Points on the sphere S^m live in E^{m+1}; tangent vectors at ``x`` are the
vectors orthogonal to ``x``. SO(3) is handled through left Lie reductions:
velocities and fields along a rotation curve are pulled back to the Lie
algebra, identified with E^3 by the hat map, where the bracket is the cross
product and the bi-invariant metric is the Euclidean dot product.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EUCLIDEAN = "euclidean"
SPHERE = "sphere"
SO3 = "so3"
KINDS = (EUCLIDEAN, SPHERE, SO3)


@dataclass(frozen=True)
class ManifoldId:
    """Which geometry is in force.

    Parameters
    ----------
    kind : {"euclidean", "sphere", "so3"}
    dim : int
        Intrinsic dimension ``m``. Fixed at 3 for SO(3).
    """

    kind: str
    dim: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown manifold kind {self.kind!r}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError("manifold dimension must be a positive integer")
        if self.kind == SO3 and self.dim != 3:
            raise ValueError("SO3 has dimension 3")

    @classmethod
    def euclidean(cls, m):
        return cls(EUCLIDEAN, m)

    @classmethod
    def sphere(cls, m):
        return cls(SPHERE, m)

    @classmethod
    def so3(cls):
        return cls(SO3, 3)

    @property
    def ambient_dim(self):
        """Length of coordinate vectors (points and tangent vectors)."""
        return self.dim + 1 if self.kind == SPHERE else self.dim

    def to_dict(self):
        return {"kind": self.kind, "dim": self.dim}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], int(d["dim"]))


def _vec(v, n=None, name="vector"):
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if n is not None and v.shape[0] != n:
        raise ValueError(f"{name} has length {v.shape[0]}, expected {n}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries")
    return v


def inner(manifold, base, a, b):
    """Riemannian inner product of tangent vectors ``a`` and ``b`` at ``base``.

    In the coordinates used here this is the Euclidean dot product for all
    three manifolds. ``base`` is only checked (sphere points must be unit).
    """
    n = manifold.ambient_dim
    a = _vec(a, n, "a")
    b = _vec(b, n, "b")
    if manifold.kind == SPHERE:
        base = _vec(base, n, "base")
        if abs(np.linalg.norm(base) - 1.0) > 1e-9:
            raise ValueError("base point is not on the sphere")
    return float(a @ b)


def sphere_curvature_action(X, Y, Z):
    """Curvature of the unit sphere, ``R(X, Y)Z = <Y,Z>X - <X,Z>Y``."""
    X = _vec(X, name="X")
    Y = _vec(Y, X.shape[0], "Y")
    Z = _vec(Z, X.shape[0], "Z")
    return (Y @ Z) * X - (X @ Z) * Y


def so3_curvature_action(X, Y, Z):
    """Curvature of the bi-invariant metric on SO(3) in reduced coordinates.

    ``R(X, Y)Z = -1/4 [[X, Y], Z]`` with the cross product as bracket.
    """
    X = _vec(X, 3, "X")
    Y = _vec(Y, 3, "Y")
    Z = _vec(Z, 3, "Z")
    return -0.25 * np.cross(np.cross(X, Y), Z)


def curvature_action(manifold, X, Y, Z):
    """``R(X, Y)Z`` for any supported manifold (zero for Euclidean space)."""
    if manifold.kind == SPHERE:
        return sphere_curvature_action(X, Y, Z)
    if manifold.kind == SO3:
        return so3_curvature_action(X, Y, Z)
    return np.zeros_like(_vec(X, manifold.ambient_dim, "X"))


def project_tangent(manifold, base, v):
    """Remove the component of ``v`` normal to the manifold at ``base``."""
    v = np.asarray(v, dtype=float)
    if manifold.kind != SPHERE:
        return v.copy()
    base = np.asarray(base, dtype=float)
    return v - (v @ base) * base


def hat(w):
    """Skew-symmetric matrix of ``w`` so that ``hat(w) @ u == cross(w, u)``."""
    wx, wy, wz = w
    return np.array([[0.0, -wz, wy], [wz, 0.0, -wx], [-wy, wx, 0.0]])


def vee(S):
    """Inverse of :func:`hat` applied to the skew part of ``S``."""
    S = np.asarray(S, dtype=float)
    A = 0.5 * (S - S.T)
    return np.array([A[2, 1], A[0, 2], A[1, 0]])


def so3_exp(w):
    """Rotation matrix ``exp(hat(w))`` by the Rodrigues formula."""
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w)
    K = hat(w)
    if theta < 1e-8:
        # second-order Taylor terms keep this accurate to ~1e-24
        return np.eye(3) + K + 0.5 * K @ K
    return (np.eye(3) + np.sin(theta) / theta * K
            + (1.0 - np.cos(theta)) / theta**2 * K @ K)


def nearest_rotation(M):
    """Closest rotation to ``M`` in the Frobenius norm (polar factor)."""
    U, _, Vt = np.linalg.svd(M)
    R = U @ Vt
    if np.linalg.det(R) < 0:
        U[:, -1] *= -1.0
        R = U @ Vt
    return R


def check_rotation(R, tol=1e-9):
    """Raise ``ValueError`` unless ``R`` is orthogonal with determinant +1."""
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise ValueError("rotation must be a 3x3 matrix")
    if np.linalg.norm(R.T @ R - np.eye(3)) > tol:
        raise ValueError("matrix is not orthogonal")
    if abs(np.linalg.det(R) - 1.0) > tol:
        raise ValueError("rotation determinant is not +1")
    return R


# -- finite differences along sampled curves ---------------------------------

def _uniform_step(times):
    times = np.asarray(times, dtype=float)
    if times.shape[0] < 3:
        raise ValueError("grid too short: need at least 3 samples")
    dt = np.diff(times)
    if np.any(dt <= 0):
        raise ValueError("times must be strictly increasing")
    return times


def _connection(manifold, base, velocity, field):
    """Correction term added to the plain time derivative of a field."""
    if manifold.kind == SPHERE:
        return np.sum(velocity * field, axis=1)[:, None] * base
    if manifold.kind == SO3:
        return 0.5 * np.cross(velocity, field)
    return np.zeros_like(field)


def _curvature_term(manifold, field, velocity):
    """``R(field, velocity)velocity`` sample-wise."""
    if manifold.kind == SPHERE:
        vv = np.sum(velocity * velocity, axis=1)[:, None]
        xv = np.sum(field * velocity, axis=1)[:, None]
        return vv * field - xv * velocity
    if manifold.kind == SO3:
        return -0.25 * np.cross(np.cross(field, velocity), velocity)
    return np.zeros_like(field)


def time_derivative(times, f):
    """Derivative of uniformly sampled ``f`` along axis 0.

    Fourth-order five-point central differences where the stencil fits,
    second-order ``numpy.gradient`` stencils on the two outermost samples.
    """
    f = np.asarray(f, dtype=float)
    out = np.gradient(f, times, axis=0, edge_order=2)
    if len(times) >= 5:
        h = times[1] - times[0]
        out[2:-2] = (f[:-4] - 8.0 * f[1:-3] + 8.0 * f[3:-1] - f[4:]) / (12.0 * h)
    return out


def covariant_derivative_samples(manifold, times, positions, velocities, field):
    """Finite-difference covariant derivative of ``field`` along a curve.

    The time derivative comes from :func:`time_derivative`; the connection
    term of the manifold is added exactly. For SO(3) the inputs are left
    reductions and ``velocities`` holds the reduced velocity ``V``.
    """
    times = _uniform_step(times)
    field = np.asarray(field, dtype=float)
    deriv = time_derivative(times, field)
    return deriv + _connection(manifold, np.asarray(positions, dtype=float),
                               np.asarray(velocities, dtype=float), field)


def covariant_derivative_fd(manifold, traj, field, index=None):
    """Covariant derivative of sampled ``field`` along trajectory ``traj``.

    Returns the whole sampled derivative, or the vector at ``index``.
    """
    out = covariant_derivative_samples(manifold, traj.times, traj.position,
                                       traj.velocity, field)
    return out if index is None else out[index]


def L_operator_samples(manifold, times, positions, velocities, field):
    """Sampled ``L(X) = nabla_t^2 X + R(X, x')x'`` by nested differences."""
    d1 = covariant_derivative_samples(manifold, times, positions, velocities, field)
    d2 = covariant_derivative_samples(manifold, times, positions, velocities, d1)
    return d2 + _curvature_term(manifold, np.asarray(field, dtype=float),
                                np.asarray(velocities, dtype=float))


def edge_trim(n):
    """Samples to drop at each end of a twice-differentiated grid of size ``n``."""
    return 4 if n > 12 else 1


def L_residual(manifold, traj, field):
    """Norms of ``L(field)`` at interior grid points of ``traj``.

    ``field`` must be sampled on the trajectory's grid, which needs at least
    five samples. The four samples at each end, reached by the low-order edge
    stencils through the nested derivatives, are dropped (short grids drop
    only one).
    """
    field = np.asarray(field, dtype=float)
    if len(traj.times) < 5:
        raise ValueError("grid too short: need at least 5 samples")
    if field.shape[0] != len(traj.times):
        raise ValueError("field samples are not aligned with the trajectory")
    res = L_operator_samples(manifold, traj.times, traj.position, traj.velocity, field)
    trim = edge_trim(len(traj.times))
    return np.linalg.norm(res, axis=1)[trim:-trim]
