"""Adaptive integration of the extremal systems.

The stepper is the Dormand-Prince 5(4) pair with PI step-size control. Every
uniform output sample is hit exactly by the stepper (steps are clipped to the
grid), so diagnostics can apply finite-difference stencils to the samples
without interpolation error. Sphere states are re-projected after every
accepted step and SO(3) frames are replaced by their polar factor.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .manifolds import EUCLIDEAN, SO3, SPHERE, ManifoldId, check_rotation, _vec

logger = logging.getLogger(__name__)

SYSTEMS = {
    "sphere_extremal": K.SPHERE_EXTREMAL,
    "euclid_extremal": K.EUCLID_EXTREMAL,
    "so3_reduced": K.SO3_REDUCED,
    "so3_frame": K.SO3_FRAME,
    "sphere_cubic": K.SPHERE_CUBIC,
    "euclid_cubic": K.EUCLID_CUBIC,
}

DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-12
DEFAULT_SAMPLES = 2048
ZERO_THRESHOLD = 1e-10


class IntegrationError(RuntimeError):
    """Raised when the stepper cannot continue (step-size underflow)."""


# -- states ------------------------------------------------------------------

@dataclass(frozen=True)
class ExtremalState:
    """State ``(x, x', X, X')`` of the extremal system on a sphere or E^m.

    ``X`` is the field ``phi * covariant acceleration``; the system drives
    ``x`` with covariant acceleration ``z X / |X|``.
    """

    manifold: ManifoldId
    x: np.ndarray
    xdot: np.ndarray
    X: np.ndarray
    Xdot: np.ndarray
    z: float

    def __post_init__(self):
        if self.manifold.kind == SO3:
            raise ValueError("use SO3ReducedState for SO(3)")
        n = self.manifold.ambient_dim
        for name in ("x", "xdot", "X", "Xdot"):
            object.__setattr__(self, name, _vec(getattr(self, name), n, name))
        if not self.z >= 0:
            raise ValueError("z must be nonnegative")

    @property
    def system(self):
        return "sphere_extremal" if self.manifold.kind == SPHERE else "euclid_extremal"

    def as_array(self):
        return np.concatenate([self.x, self.xdot, self.X, self.Xdot])

    @property
    def params(self):
        return np.array([float(self.z)])

    def constraint_violations(self):
        """Sphere constraints: unit norm, tangency of x', X and of X'."""
        if self.manifold.kind != SPHERE:
            return {}
        x, v, X, Xd = self.x, self.xdot, self.X, self.Xdot
        return {
            "norm": abs(np.linalg.norm(x) - 1.0),
            "velocity_tangency": abs(x @ v),
            "field_tangency": abs(x @ X),
            "field_rate_tangency": abs(v @ X + x @ Xd),
        }


SphereExtremalState = ExtremalState


@dataclass(frozen=True)
class SO3ReducedState:
    """Reduced state ``(V, W)`` on SO(3) with constants ``z`` and ``C``.

    ``frame`` optionally carries a rotation so the group curve is integrated
    alongside (``R' = R hat(V)``).
    """

    V: np.ndarray
    W: np.ndarray
    z: float
    C: np.ndarray
    frame: np.ndarray | None = None

    def __post_init__(self):
        for name in ("V", "W", "C"):
            object.__setattr__(self, name, _vec(getattr(self, name), 3, name))
        if not self.z >= 0:
            raise ValueError("z must be nonnegative")
        if self.frame is not None:
            object.__setattr__(self, "frame", check_rotation(self.frame))

    manifold = ManifoldId.so3()

    @property
    def system(self):
        return "so3_reduced" if self.frame is None else "so3_frame"

    def as_array(self):
        parts = [self.V, self.W]
        if self.frame is not None:
            parts.append(np.asarray(self.frame, dtype=float).ravel())
        return np.concatenate(parts)

    @property
    def params(self):
        return np.concatenate([[float(self.z)], self.C])

    def constraint_violations(self):
        return {}


@dataclass(frozen=True)
class CubicState:
    """State ``(x, x', A, B)`` of the Riemannian cubic equation.

    ``A`` is the covariant acceleration and ``B`` its covariant derivative.
    """

    manifold: ManifoldId
    x: np.ndarray
    xdot: np.ndarray
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        if self.manifold.kind == SO3:
            raise ValueError("cubic baseline supports sphere and Euclidean space only")
        n = self.manifold.ambient_dim
        for name in ("x", "xdot", "A", "B"):
            object.__setattr__(self, name, _vec(getattr(self, name), n, name))

    @property
    def system(self):
        return "sphere_cubic" if self.manifold.kind == SPHERE else "euclid_cubic"

    def as_array(self):
        return np.concatenate([self.x, self.xdot, self.A, self.B])

    @property
    def params(self):
        return np.zeros(1)

    def constraint_violations(self):
        if self.manifold.kind != SPHERE:
            return {}
        x = self.x
        return {"norm": abs(np.linalg.norm(x) - 1.0),
                "velocity_tangency": abs(x @ self.xdot)}


def _system_dims(state):
    n = state.manifold.ambient_dim
    return SYSTEMS[state.system], n


def state_derivative(state, zero_threshold=ZERO_THRESHOLD):
    """Evaluate the system right-hand side at ``state`` as a flat array.

    Raises ``ZeroFieldError`` when the singular field (X or W) is below
    ``zero_threshold``.
    """
    code, n = _system_dims(state)
    y = state.as_array()
    k = K.field_slice(code, n)
    if k >= 0:
        m = 3 if k == 3 else n
        if np.linalg.norm(y[k:k + m]) <= zero_threshold:
            raise ZeroFieldError("field norm below threshold; right-hand side undefined")
    return K.rhs(code, y, state.params, n, zero_threshold)


class ZeroFieldError(ValueError):
    """The field X (or W) vanished where the extremal equations are singular."""


def sphere_rhs(state, zero_threshold=ZERO_THRESHOLD):
    """Derivative of an extremal state as ``(x', x'', X', X'')``."""
    d = state_derivative(state, zero_threshold)
    n = state.manifold.ambient_dim
    return tuple(d[i * n:(i + 1) * n] for i in range(4))


def so3_reduced_rhs(state, zero_threshold=ZERO_THRESHOLD):
    """Derivative ``(V', W')`` of a reduced SO(3) state."""
    d = state_derivative(state, zero_threshold)
    return d[0:3], d[3:6]


def riemannian_cubic_rhs(state):
    """Derivative ``(x', x'', A', B')`` of a cubic state in ambient coordinates."""
    d = state_derivative(state)
    n = state.manifold.ambient_dim
    return tuple(d[i * n:(i + 1) * n] for i in range(4))


# -- trajectories -------------------------------------------------------------

@dataclass(frozen=True)
class ZeroEvent:
    """The singular field came within the threshold of zero near ``time``."""

    time: float
    min_norm: float


class DenseOutput:
    """Continuous extension of an adaptive run (4th order, Dormand-Prince)."""

    def __init__(self, t_starts, steps, y_starts, stages):
        self.t_starts = np.asarray(t_starts)
        self.steps = np.asarray(steps)
        self.y_starts = np.asarray(y_starts)
        self.stages = np.asarray(stages)
        self.t_min = float(self.t_starts[0])
        self.t_max = float(self.t_starts[-1] + self.steps[-1])

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t < self.t_min - 1e-12) or np.any(t > self.t_max + 1e-12):
            raise ValueError("time outside the integrated span")
        idx = np.clip(np.searchsorted(self.t_starts, t, side="right") - 1,
                      0, len(self.t_starts) - 1)
        h = self.steps[idx]
        s = (t - self.t_starts[idx]) / h
        powers = np.stack([s, s**2, s**3, s**4], axis=1)  # (N, 4)
        coef = powers @ K.P_DENSE.T  # (N, 7)
        incr = np.einsum("nj,njd->nd", coef, self.stages[idx])
        return self.y_starts[idx] + h[:, None] * incr


@dataclass
class Trajectory:
    """Uniformly sampled curve with its states and derived fields.

    ``system`` names the ODE that produced it, or ``"curve"`` for sampled
    closed-form curves whose states are ``[x, x', covariant acceleration]``.
    """

    manifold: ManifoldId
    system: str
    times: np.ndarray
    states: np.ndarray
    params: dict = field(default_factory=dict)
    status: str = "completed"
    events: tuple = ()
    dense: DenseOutput | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.times.ndim != 1 or self.states.shape[0] != self.times.shape[0]:
            raise ValueError("states are not aligned with times")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def n(self):
        return self.manifold.ambient_dim

    def _block(self, i):
        n = self.n
        return self.states[:, i * n:(i + 1) * n]

    @property
    def position(self):
        """Points on the manifold (rotation matrices are in :attr:`frames`)."""
        if self.manifold.kind == SO3:
            if self.system == "so3_frame":
                return self.states[:, 6:15]
            return np.zeros((len(self.times), 3))
        return self._block(0)

    @property
    def velocity(self):
        """Velocity ``x'`` (reduced velocity ``V`` on SO(3))."""
        if self.manifold.kind == SO3:
            return self.states[:, 0:3]
        return self._block(1)

    @property
    def field(self):
        """The field ``X`` (``W`` on SO(3)), or ``None`` if the run has none."""
        if self.system in ("sphere_extremal", "euclid_extremal"):
            return self._block(2)
        if self.system in ("so3_reduced", "so3_frame"):
            return self.states[:, 3:6]
        return None

    @property
    def frames(self):
        if self.system != "so3_frame":
            raise AttributeError("trajectory carries no rotation frames")
        return self.states[:, 6:15].reshape(-1, 3, 3)

    @property
    def z(self):
        return self.params.get("z")

    @property
    def C(self):
        c = self.params.get("C")
        return None if c is None else np.asarray(c, dtype=float)

    def derivatives(self):
        """Right-hand side evaluated at every sample (ODE trajectories only)."""
        code = SYSTEMS[self.system]
        p = np.concatenate([[self.params.get("z", 0.0)],
                            self.params.get("C", np.zeros(3))])
        return np.array([K.rhs(code, y, p, self.n, ZERO_THRESHOLD) for y in self.states])

    @property
    def acceleration(self):
        """Covariant acceleration read from the state.

        For extremal runs this is the ODE's own ``x'' + |x'|^2 x`` (sphere),
        ``x''`` (Euclidean) or ``V'`` (SO(3)); for cubic runs the ``A`` block;
        for sampled curves the stored block.
        """
        if self.system in ("sphere_cubic", "euclid_cubic", "curve"):
            return self._block(2)
        d = self.derivatives()
        if self.manifold.kind == SO3:
            return d[:, 0:3]
        n = self.n
        acc = d[:, n:2 * n]
        if self.manifold.kind == SPHERE:
            vv = np.sum(self.velocity**2, axis=1)[:, None]
            acc = acc + vv * self.position
        return acc

    @property
    def phi(self):
        """``|X| / z`` sampled; defined only up to a positive scale."""
        F = self.field
        if F is None:
            return None
        z = self.z or 0.0
        nrm = np.linalg.norm(F, axis=1)
        return nrm / z if z > 0 else nrm

    def at(self, t):
        """States at arbitrary times: dense output if present, else cubic spline."""
        if self.dense is not None:
            return self.dense(t)
        from scipy.interpolate import CubicSpline
        return CubicSpline(self.times, self.states, axis=0)(np.atleast_1d(t))

    @property
    def final_state(self):
        return self.states[-1]


# -- integration ---------------------------------------------------------------

def _initial_step(code, y, f, p, n, rtol, atol, span):
    scale = atol + rtol * np.abs(y)
    d0 = np.sqrt(np.mean((y / scale) ** 2))
    d1 = np.sqrt(np.mean((f / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = y + h0 * f
    f1 = K.rhs(code, y1, p, n, ZERO_THRESHOLD)
    d2 = np.sqrt(np.mean(((f1 - f) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, span)


def integrate(state, span, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL,
              n_samples=DEFAULT_SAMPLES, dense_output=False, project=True,
              zero_threshold=ZERO_THRESHOLD, on_zero="halt", max_steps=10_000_000):
    """Integrate an extremal, reduced or cubic system over ``span``.

    Parameters
    ----------
    state : ExtremalState, SO3ReducedState or CubicState
        Initial state; carries the constants ``z`` and ``C``.
    span : (float, float)
        ``(ta, tb)`` with ``ta < tb``.
    rtol, atol : float
        Local error tolerances of the 5(4) pair.
    n_samples : int
        Number of uniform output samples including both ends.
    dense_output : bool
        Keep the stage data so the run can be evaluated at any time.
    project : bool
        Re-project sphere states / re-orthonormalize frames after each step.
    on_zero : {"halt", "continue"}
        What to do when the field ``X`` (or ``W``) comes within
        ``zero_threshold`` of zero. ``"halt"`` stops and returns the samples
        reached so far with ``status="event"``; ``"continue"`` records the
        event and steps across the kink (the controller shrinks the step
        there).

    Returns
    -------
    Trajectory
    """
    ta, tb = map(float, span)
    if not ta < tb:
        raise ValueError("span not increasing")
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    if on_zero not in ("halt", "continue"):
        raise ValueError("on_zero must be 'halt' or 'continue'")
    code, n = _system_dims(state)
    p = state.params
    if isinstance(state, SO3ReducedState):
        p = state.params
    y = state.as_array().astype(float)
    if project:
        y = K.project(code, y, n)
    k = K.field_slice(code, n)
    if k >= 0:
        m = 3 if k == 3 else n
        if np.linalg.norm(y[k:k + m]) <= zero_threshold:
            raise ZeroFieldError("initial field is zero; extremal equations are singular")

    grid = np.linspace(ta, tb, n_samples)
    out = np.empty((n_samples, y.shape[0]))
    out[0] = y
    n_out = 1
    t = ta
    f = K.rhs(code, y, p, n, zero_threshold)
    h = _initial_step(code, y, f, p, n, rtol, atol, tb - ta)
    err_prev = 1e-4
    events = []
    status = "completed"
    end_margin = 1e-6 * (tb - ta)
    dense = ([], [], [], []) if dense_output else None
    steps = 0
    beta = 0.04
    alpha = 0.2 - 0.75 * beta

    while n_out < n_samples:
        steps += 1
        if steps > max_steps:
            raise IntegrationError(f"exceeded {max_steps} steps at t={t}")
        if h <= 10 * np.finfo(float).eps * max(1.0, abs(t)):
            raise IntegrationError(f"step size underflow at t={t}")
        target = grid[n_out]
        landing = t + h >= target - 1e-13 * max(1.0, abs(target))
        h_use = target - t if landing else h
        y_new, stages, err = K.attempt(code, y, f, h_use, p, n, zero_threshold, rtol, atol)
        if not np.isfinite(err):
            h = 0.2 * h_use
            continue
        if err > 1.0:
            h = h_use * max(0.2, 0.9 * err ** -0.2)
            continue

        if k >= 0:
            mn, s = K.segment_min_norm(code, y, y_new, n)
            if mn < zero_threshold:
                t_ev = _refine_zero(code, y, f, h_use, p, n, zero_threshold,
                                    rtol, atol, t, s)
                # a zero at a step boundary is seen by both adjacent steps
                if not events or t_ev - events[-1].time > 1e-9 * (tb - ta):
                    events.append(ZeroEvent(t_ev, float(mn)))
                    logger.debug("field near zero at t=%.12g", t_ev)
                if on_zero == "halt" and t_ev < tb - end_margin:
                    status = "event"
                    break

        if dense is not None:
            dense[0].append(t)
            dense[1].append(h_use)
            dense[2].append(y)
            dense[3].append(stages)
        t = target if landing else t + h_use
        if project and code in (K.SPHERE_EXTREMAL, K.SPHERE_CUBIC, K.SO3_FRAME):
            y = K.project(code, y_new, n)
            f = K.rhs(code, y, p, n, zero_threshold)
        else:
            y = y_new
            f = stages[6]
        if landing:
            out[n_out] = y
            n_out += 1

        fac = 0.9 * max(err, 1e-10) ** -alpha * err_prev ** beta
        fac = min(5.0, max(0.2, fac))
        h_next = h_use * fac
        # a clipped landing step should not shrink the next proposal
        h = max(h_next, h) if landing and h_use < h else h_next
        err_prev = max(err, 1e-4)

    traj = Trajectory(
        manifold=state.manifold,
        system=state.system,
        times=grid[:n_out],
        states=out[:n_out],
        params={"z": float(state.params[0]),
                **({"C": np.asarray(state.C)} if isinstance(state, SO3ReducedState) else {})},
        status=status,
        events=tuple(events),
        meta={"rtol": rtol, "atol": atol, "steps": steps, "span": (ta, tb)},
    )
    if dense is not None and dense[0]:
        traj.dense = DenseOutput(*dense)
    return traj


def _refine_zero(code, y, f, h, p, n, thr, rtol, atol, t, s0):
    """Bisect for the time where ``|field|`` is minimal inside a step.

    The minimum is where ``d/dt |field|^2`` changes sign; each probe is a
    fresh sub-step of the same pair from the step's start.
    """
    if K.field_rate(code, y, f, n) >= 0.0:
        return t
    lo, hi = 0.0, h
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        ym, stages, _ = K.attempt(code, y, f, mid, p, n, thr, rtol, atol)
        if K.field_rate(code, ym, stages[6], n) < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, abs(t)):
            break
    return t + 0.5 * (lo + hi)
