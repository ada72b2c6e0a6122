"""SO(3) machinery on top of the reduced ``(V, W)`` system.

``V`` is the left reduction of the velocity and ``W`` the left reduction of
the field ``phi * covariant acceleration``; they obey ``V' = z W/|W|`` and
``W' = W x V + C``. Along any solution

* ``c = |W'|^2`` and
* ``a = z|W| - <C, V>``

are constant, and with ``phi = |W|/z`` the second one reads
``z^2 phi = <C, V> + a``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .integrator import (DEFAULT_RTOL, DEFAULT_ATOL, SO3ReducedState, Trajectory,
                         integrate)
from .manifolds import check_rotation, time_derivative, vee

NULL = "null"
NON_NULL = "non_null"


def conserved(state):
    """``(c, a)`` for a reduced state."""
    dW = np.cross(state.W, state.V) + state.C
    c = float(dW @ dW)
    a = float(state.z * np.linalg.norm(state.W) - state.C @ state.V)
    return c, a


def conserved_samples(traj):
    """Sampled ``c(t)`` and ``a(t)`` along a reduced trajectory."""
    V, W = traj.velocity, traj.field
    C, z = traj.C, traj.z
    dW = np.cross(W, V) + C
    c = np.sum(dW * dW, axis=1)
    a = z * np.linalg.norm(W, axis=1) - V @ C
    return c, a


def relative_drift(values):
    """``(max - min) / max(|v0|, 1e-300)``; zero for a constant sequence."""
    values = np.asarray(values, dtype=float)
    ref = max(abs(values[0]), np.max(np.abs(values)), 1e-300)
    return float((values.max() - values.min()) / ref)


@dataclass
class ReducedSolution:
    """A reduced trajectory with its conserved quantities and ``phi``."""

    traj: Trajectory
    c: float
    a: float
    phi: np.ndarray

    @classmethod
    def from_trajectory(cls, traj):
        if traj.system not in ("so3_reduced", "so3_frame"):
            raise ValueError("not a reduced SO(3) trajectory")
        c, a = conserved_samples(traj)
        return cls(traj, float(c[0]), float(a[0]), traj.phi)

    @property
    def state0(self):
        y = self.traj.states[0]
        return SO3ReducedState(y[0:3], y[3:6], self.traj.z, self.traj.C)

    def relation_residual(self):
        """Samples of ``z^2 phi - <C, V> - a`` (zero along exact solutions)."""
        z = self.traj.z
        return z * z * self.phi - self.traj.velocity @ self.traj.C - self.a


def solve_reduced(state, span, **kwargs):
    """Integrate the reduced system and wrap it as a :class:`ReducedSolution`."""
    return ReducedSolution.from_trajectory(integrate(state, span, **kwargs))


@dataclass
class GroupTrajectory:
    """Rotation samples, with the reduced velocity integrated alongside them."""

    times: np.ndarray
    rotations: np.ndarray
    velocity: np.ndarray | None = None

    def __post_init__(self):
        for R in self.rotations:
            check_rotation(R)


def reconstruct(reduced, R0, rtol=None, atol=None):
    """Recover the rotation curve ``x(t)`` with ``x' = x hat(V)``, ``x(t0) = R0``.

    The reduced system is re-integrated together with the frame by the same
    5(4) pair on the same output grid; the frame is replaced by its polar
    factor after every accepted step.
    """
    R0 = check_rotation(R0)
    tr = reduced.traj
    if len(tr.times) < 2:
        raise ValueError("degenerate grid")
    if len(tr.times) > 2 and np.max(np.diff(tr.times)) > 1e-2 * (1 + 1e-9):
        raise ValueError("reduced trajectory is too coarse (grid step must be <= 1e-2)")
    s0 = reduced.state0
    state = SO3ReducedState(s0.V, s0.W, s0.z, s0.C, frame=R0)
    full = integrate(state, (tr.times[0], tr.times[-1]),
                     rtol=rtol or tr.meta.get("rtol", DEFAULT_RTOL),
                     atol=atol or tr.meta.get("atol", DEFAULT_ATOL),
                     n_samples=len(tr.times))
    return GroupTrajectory(full.times, full.frames, full.velocity)


def left_reduced_velocity(times, rotations):
    """``V = vee(R^T R')`` with ``R'`` by fourth-order finite differences."""
    rotations = np.asarray(rotations, dtype=float)
    dR = time_derivative(np.asarray(times, dtype=float), rotations)
    return np.array([vee(R.T @ D) for R, D in zip(rotations, dR)])


def reduced_cubic_residual(times, V, trim=6):
    """Norms of ``V''' + V x V''``, the reduced Riemannian cubic equation.

    ``trim`` samples are dropped at each end, where the low-order edge
    stencils of the nested differences have propagated.
    """
    times = np.asarray(times, dtype=float)
    d1 = time_derivative(times, V)
    d2 = time_derivative(times, d1)
    d3 = time_derivative(times, d2)
    res = d3 + np.cross(V, d2)
    return np.linalg.norm(res, axis=1)[trim:-trim]


def frame_cubic_residual(group_traj):
    """Reduced cubic residual of a rotation curve, from its frames alone.

    Four nested differences amplify rounding in the frames by roughly
    ``h**-4``, which floors this at a few times 1e-4 on a 1e-3 grid; prefer
    :func:`group_cubic_residual` together with :func:`frame_velocity_mismatch`.
    """
    V = left_reduced_velocity(group_traj.times, group_traj.rotations)
    return reduced_cubic_residual(group_traj.times, V, trim=8)


def group_cubic_residual(group_traj):
    """Reduced cubic residual on the velocity carried by ``group_traj``."""
    if group_traj.velocity is None:
        return frame_cubic_residual(group_traj)
    return reduced_cubic_residual(group_traj.times, group_traj.velocity)


def frame_velocity_mismatch(group_traj):
    """Max ``|vee(R^T R') - V|`` over the grid, ``R'`` by finite differences.

    Small values certify that the frames are the curve whose left-reduced
    velocity is the carried ``V``.
    """
    if group_traj.velocity is None:
        raise ValueError("group trajectory carries no reduced velocity")
    V = left_reduced_velocity(group_traj.times, group_traj.rotations)
    return float(np.max(np.linalg.norm(V - group_traj.velocity, axis=1)[2:-2]))


@dataclass(frozen=True)
class NullVerdict:
    kind: str
    C_norm: float
    phi_drift: float | None = None
    cubic_residual: float | None = None

    @property
    def is_null(self):
        return self.kind == NULL


def classify_null(reduced, tol=1e-12):
    """Null iff ``|C| <= tol``; null curves also report phi drift and cubic residual.

    ``phi_drift`` is ``max |phi - phi(0)| / phi(0)``; ``cubic_residual`` is the
    largest finite-difference residual of the reduced cubic equation on ``V``.
    """
    cn = float(np.linalg.norm(reduced.traj.C))
    if cn > tol:
        return NullVerdict(NON_NULL, cn)
    phi = reduced.phi
    drift = float(np.max(np.abs(phi - phi[0])) / phi[0]) if phi[0] > 0 else float("nan")
    res = reduced_cubic_residual(reduced.traj.times, reduced.traj.velocity)
    return NullVerdict(NULL, cn, drift, float(res.max()) if res.size else 0.0)
