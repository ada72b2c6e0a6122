"""Boundary-value problems for extremals, solved by shooting.

The unknowns are the initial field ``X(t0)``, its derivative and ``z``. The
field is only defined up to a positive factor, so ``(X(t0), X'(t0))`` is
normalized to unit length and the search runs over ``2m - 1`` directions plus
``z``. Each residual evaluation is one forward integration.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import least_squares
from scipy.stats import qmc
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .diagnostics import (DiagnosticsReport, analyze, acceleration_samples, field_samples,
                          zero_times, _verdict, DEFAULT_THRESHOLDS)
from .integrator import (DEFAULT_ATOL, DEFAULT_RTOL, ExtremalState, IntegrationError,
                         Trajectory, ZeroFieldError, integrate)
from .manifolds import (EUCLIDEAN, SO3, SPHERE, L_operator_samples, ManifoldId,
                        edge_trim)
from .validation import BoundaryData, check_boundary, check_times

logger = logging.getLogger(__name__)

FULL_VELOCITIES = "full_velocities"
FREE_END_VELOCITY = "free_end_velocity"
VARIANTS = (FULL_VELOCITIES, FREE_END_VELOCITY)

# residual entries returned when the field vanishes before t1
EVENT_PENALTY = 1e3


@dataclass(frozen=True)
class Unknowns:
    """Initial field, its derivative and ``z``."""

    X0: np.ndarray
    X0dot: np.ndarray
    z: float

    def normalized(self):
        s = np.sqrt(self.X0 @ self.X0 + self.X0dot @ self.X0dot)
        if s == 0:
            raise ValueError("initial field and its derivative are both zero")
        return Unknowns(self.X0 / s, self.X0dot / s, self.z)


@dataclass(frozen=True)
class ShootingProblem:
    manifold: ManifoldId
    boundary: BoundaryData
    variant: str = FULL_VELOCITIES
    max_iterations: int = 50
    restarts: int = 32
    tol: float = 1e-8
    seed: int = 0
    rtol: float = DEFAULT_RTOL
    atol: float = DEFAULT_ATOL
    # multiple of the Hermite guess's z beyond which iterates are rejected
    z_cap_factor: float = 20.0
    # stop at the first restart that meets tol; False runs every restart
    early_stop: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.manifold.kind == SO3:
            raise ValueError("shooting supports spheres and Euclidean space")
        if self.boundary.dim != self.manifold.ambient_dim:
            raise ValueError("boundary data dimension does not match the manifold")
        if self.variant == FULL_VELOCITIES and self.boundary.v1 is None:
            raise ValueError("full-velocities problem needs the end velocity")
        if self.manifold.kind == SPHERE:
            b = self.boundary
            for name, p in (("x0", b.x0), ("x1", b.x1)):
                if abs(np.linalg.norm(p) - 1.0) > 1e-9:
                    raise ValueError(f"{name} not on sphere (tolerance 1e-9)")
            if abs(b.x0 @ b.v0) > 1e-9 or (b.v1 is not None and abs(b.x1 @ b.v1) > 1e-9):
                raise ValueError("boundary velocities must be tangent")

    @property
    def m(self):
        """Intrinsic dimension."""
        return self.manifold.dim

    def tangent_basis(self):
        """Orthonormal basis (columns) of the tangent space at ``x0``."""
        n = self.manifold.ambient_dim
        if self.manifold.kind == EUCLIDEAN:
            return np.eye(n)
        return null_space(self.boundary.x0[None, :])

    def initial_state(self, unknowns):
        x0, v0 = self.boundary.x0, self.boundary.v0
        X0, Xd = unknowns.X0, unknowns.X0dot
        if self.manifold.kind == SPHERE:
            # keep X tangent: <x, X>' = <x', X> + <x, X'> = 0
            X0 = X0 - (x0 @ X0) * x0
            Xd = Xd - (x0 @ Xd + v0 @ X0) * x0
        return ExtremalState(self.manifold, x0, v0, X0, Xd, float(unknowns.z))

    def unknowns_from_params(self, q):
        """Map unconstrained ``q`` (length ``2m + 1``) to normalized unknowns."""
        m = self.m
        u = np.asarray(q[:2 * m], dtype=float)
        nu = np.linalg.norm(u)
        if nu == 0:
            raise ValueError("zero direction")
        E = self.tangent_basis()
        return Unknowns(E @ (u[:m] / nu), E @ (u[m:] / nu), abs(float(q[2 * m])))

    def params_from_unknowns(self, unknowns):
        E = self.tangent_basis()
        u = unknowns.normalized()
        return np.concatenate([E.T @ u.X0, E.T @ u.X0dot, [u.z]])


@dataclass
class ShootingResult:
    solution: Trajectory | None
    residual: float
    iterations: int
    converged: bool
    diagnostics: DiagnosticsReport | None
    unknowns: Unknowns | None = None
    seed_index: int | None = None
    event_time: float | None = None
    history: list = field(default_factory=list)


def _integrate(problem, unknowns, n_samples=2):
    b = problem.boundary
    return integrate(problem.initial_state(unknowns), (b.t0, b.t1), rtol=problem.rtol,
                     atol=problem.atol, n_samples=n_samples, on_zero="halt")


def residual_vector(problem, unknowns):
    """Boundary mismatch at ``t1`` and the event time (``None`` if none).

    ``FULL_VELOCITIES``: ``[x(t1) - x1, x'(t1) - v1]``. ``FREE_END_VELOCITY``:
    ``[x(t1) - x1, X(t1)]``. Unknowns are normalized first, so the residual
    is invariant under positive rescaling of ``(X0, X0dot)``.
    """
    u = unknowns.normalized()
    b = problem.boundary
    n = problem.manifold.ambient_dim
    try:
        tr = _integrate(problem, u)
    except (ZeroFieldError, IntegrationError):
        return np.full(2 * n, EVENT_PENALTY), b.t0
    if tr.status == "event":
        t_ev = tr.events[-1].time if tr.events else b.t0
        return np.full(2 * n, EVENT_PENALTY * (1.0 + (b.t1 - t_ev) / b.duration)), t_ev
    y = tr.final_state
    x, v, X = y[:n], y[n:2 * n], y[2 * n:3 * n]
    if problem.variant == FULL_VELOCITIES:
        return np.concatenate([x - b.x1, v - b.v1]), None
    return np.concatenate([x - b.x1, X]), None


def residual(problem, unknowns):
    """Max-norm of :func:`residual_vector`."""
    return float(np.max(np.abs(residual_vector(problem, unknowns)[0])))


def hermite_guess(problem):
    """Unknowns read off the Hermite cubic through the boundary data.

    The cubic's acceleration at ``t0`` and its (constant) jerk give the field
    direction and its rate; its largest acceleration gives ``z``. For the
    free-end variant the end velocity of the chord is used.
    """
    b = problem.boundary
    T = b.duration
    v1 = b.v1 if b.v1 is not None else (b.x1 - b.x0) / T
    e = b.x1 - b.x0 - b.v0 * T
    dv = v1 - b.v0
    c3 = (T * dv - 2 * e) / T**3
    c2 = (e - c3 * T**3) / T**2
    a0, jerk = 2 * c2, 6 * c3
    z = max(np.linalg.norm(a0), np.linalg.norm(a0 + jerk * T))
    if problem.manifold.kind == SPHERE:
        x0 = b.x0
        a0 = a0 - (x0 @ a0) * x0
        jerk = jerk - (x0 @ jerk) * x0
    if np.linalg.norm(a0) + np.linalg.norm(jerk) < 1e-14:
        a0 = problem.tangent_basis()[:, 0]
    return Unknowns(a0, jerk, z).normalized()


def _seeds(problem):
    """Hermite guess followed by scrambled Sobol points over the unknown space."""
    m = problem.m
    q_h = problem.params_from_unknowns(hermite_guess(problem))
    seeds = [q_h]
    n_extra = problem.restarts - 1
    if n_extra > 0:
        z_scale = 2.0 * max(q_h[-1], 1.0)
        sob = qmc.Sobol(2 * m + 1, scramble=True, seed=problem.seed)
        pts = sob.random(int(2 ** np.ceil(np.log2(n_extra))))[:n_extra]
        for r in pts:
            q = np.empty(2 * m + 1)
            q[:2 * m] = 2.0 * r[:2 * m] - 1.0
            q[2 * m] = z_scale * r[2 * m]
            seeds.append(q)
    return seeds


def _fun(q, problem, z_cap):
    """Boundary residual plus a gauge row pinning ``|u| = 1``.

    The direction ``u`` enters only through ``u / |u|``; the extra row
    removes that flat direction so the damped iteration stays well posed.
    Iterates with ``z > z_cap`` get the flat penalty: runaway accelerations
    make each integration expensive and never lead anywhere useful.
    """
    gauge = np.linalg.norm(q[:-1]) - 1.0
    r = np.full(2 * problem.manifold.ambient_dim, EVENT_PENALTY)
    if abs(q[-1]) <= z_cap:
        try:
            r = residual_vector(problem, problem.unknowns_from_params(q))[0]
        except ValueError:
            pass
    return np.append(r, gauge)


def solve(problem, n_samples=2048):
    """Shoot from every seed until one meets ``problem.tol``.

    Seeds are tried in order (Hermite guess, then Sobol points) and, with
    ``problem.early_stop``, the search stops at the first converged one. The
    smallest residual wins, ties going to the lower seed index. Deterministic
    for a fixed seed.
    """
    best = None
    history = []
    total_iter = 0
    z_cap = problem.z_cap_factor * max(hermite_guess(problem).z, 1.0)
    for i, q0 in enumerate(_seeds(problem)):
        if np.linalg.norm(q0[:-1]) < 1e-12:
            continue
        sol = least_squares(_fun, q0, args=(problem, z_cap), method="lm", xtol=1e-15,
                            ftol=1e-15, gtol=1e-15,
                            max_nfev=problem.max_iterations * (2 * problem.m + 2))
        total_iter += sol.nfev
        r = float(np.max(np.abs(sol.fun[:-1])))
        history.append((i, r))
        logger.debug("restart %d: residual %.3e after %d evaluations", i, r, sol.nfev)
        if best is None or r < best[0]:
            best = (r, i, sol.x)
        if problem.early_stop and r <= problem.tol:
            break
    r, i, q = best
    u = problem.unknowns_from_params(q)
    _, t_ev = residual_vector(problem, u)
    converged = r <= problem.tol
    traj = report = None
    if t_ev is None:
        traj = _integrate(problem, u, n_samples=n_samples)
        report = analyze(traj)
    return ShootingResult(traj, r, total_iter, converged, report, u, i, t_ev, history)


class ShootingSolver(BaseEstimator):
    """Estimator wrapper around :func:`solve`.

    Parameters
    ----------
    manifold : {"sphere", "euclidean"}
    variant : {"full_velocities", "free_end_velocity"}
    restarts, max_iterations, tol, seed
        Passed to :class:`ShootingProblem`.
    n_samples : int
        Output samples of the recovered trajectory.

    Attributes
    ----------
    result_ : ShootingResult
    z_ : float
    """

    def __init__(self, manifold="sphere", variant=FULL_VELOCITIES, restarts=32,
                 max_iterations=50, tol=1e-8, seed=0, n_samples=2048):
        self.manifold = manifold
        self.variant = variant
        self.restarts = restarts
        self.max_iterations = max_iterations
        self.tol = tol
        self.seed = seed
        self.n_samples = n_samples

    def fit(self, times, points, velocities=None):
        data = check_boundary(times, points, velocities,
                              require_end_velocity=self.variant == FULL_VELOCITIES)
        d = data.dim
        mid = (ManifoldId.sphere(d - 1) if self.manifold == "sphere"
               else ManifoldId.euclidean(d))
        self.problem_ = ShootingProblem(mid, data, self.variant, self.max_iterations,
                                        self.restarts, self.tol, self.seed)
        self.result_ = solve(self.problem_, self.n_samples)
        self.converged_ = self.result_.converged
        self.z_ = self.result_.unknowns.z
        self.n_features_in_ = d
        return self

    def predict(self, t):
        check_is_fitted(self, "result_")
        if self.result_.solution is None:
            raise RuntimeError("no trajectory: the best restart hit a field zero")
        n = self.n_features_in_
        return self.result_.solution.at(check_times(t))[:, :n]


# -- multi-point check ---------------------------------------------------------

def _recover_phi(traj, idx):
    """``phi`` minimizing ``|L(phi A)|`` on the samples ``idx``, with ``|phi| = 1``.

    ``L(phi A)`` is linear in the sampled ``phi`` and banded (the nested
    stencils reach fewer than ``_REACH`` samples), so its matrix is assembled
    from ``2 * _REACH + 1`` probes, each perturbing every column in one
    residue class at once. The smallest right singular vector is returned,
    signed to be mostly positive.
    """
    t = traj.times[idx]
    x, v = traj.position[idx], traj.velocity[idx]
    A = acceleration_samples(traj)[idx]
    k, d = A.shape
    M = np.zeros((k, d, k))
    width = 2 * _REACH + 1
    for c in range(min(width, k)):
        e = np.zeros(k)
        cols = np.arange(c, k, width)
        e[cols] = 1.0
        out = L_operator_samples(traj.manifold, t, x, v, e[:, None] * A)
        for j in cols:
            lo, hi = max(0, j - _REACH), min(k, j + _REACH + 1)
            M[lo:hi, :, j] = out[lo:hi]
    trim = edge_trim(k)
    M = M[trim:k - trim].reshape(-1, k)
    _, _, vt = np.linalg.svd(M, full_matrices=False)
    phi = vt[-1]
    return phi if phi.sum() >= 0 else -phi


_REACH = 12


def check_multipoint(traj, knot_times, thresholds=None, max_fit_samples=1001):
    """Per-segment extremality check of a piecewise curve.

    For each segment ``[t_{j-1}, t_j]`` reports the acceleration-norm drift,
    the relative ``L(phi A)`` residual (``phi`` from the trajectory's field
    if it has one, else recovered by least squares on at most
    ``max_fit_samples`` samples) and the verdicts. Also reports whether any
    segment passes, and the relative size of ``phi`` at the first and last
    knot (the end conditions ``Phi(t0) = 0`` / ``Phi(tn) = 0``).
    """
    th = dict(DEFAULT_THRESHOLDS)
    th.update(thresholds or {})
    knots = check_times(knot_times)
    if knots.size < 2:
        raise ValueError("need at least 2 knots")
    if np.any(np.diff(knots) <= 0):
        raise ValueError("knot times must be increasing")
    t = traj.times
    eps = 1e-9 * max(1.0, abs(t[-1]))
    if knots[0] < t[0] - eps or knots[-1] > t[-1] + eps:
        raise ValueError("knot times outside the trajectory span")

    F_all = field_samples(traj)
    acc = acceleration_samples(traj)
    segments = []
    phi_ends = []
    last = len(knots) - 2
    for j in range(last + 1):
        # samples on interior knots belong to neither side: the acceleration
        # of a track-sum may jump there
        lo_ok = t >= knots[j] - eps if j == 0 else t > knots[j] + eps
        hi_ok = t <= knots[j + 1] + eps if j == last else t < knots[j + 1] - eps
        idx = np.nonzero(lo_ok & hi_ok)[0]
        if idx.size < 5:
            raise ValueError(f"segment {j} has fewer than 5 samples")
        an = np.linalg.norm(acc[idx], axis=1)
        J = an.max()
        z_drift = float((J - an.min()) / J) if J > 0 else 0.0
        if F_all is not None:
            sub = idx
            F = F_all[sub]
            phi = np.linalg.norm(F, axis=1)
        else:
            stride = int(np.ceil(idx.size / max_fit_samples))
            sub = idx[::stride]
            phi = _recover_phi(traj, sub)
            F = phi[:, None] * acc[sub]
        Fn = np.linalg.norm(F, axis=1)
        res = L_operator_samples(traj.manifold, t[sub], traj.position[sub],
                                 traj.velocity[sub], F)
        k = edge_trim(len(sub))
        L_rel = float(np.linalg.norm(res, axis=1)[k:-k].max() / Fn.max()) if Fn.max() > 0 else 0.0
        verdicts = {"z_constant": _verdict(z_drift, th["z_drift"]),
                    "L_residual": _verdict(L_rel, th["L_residual"])}
        segments.append({
            "span": [float(knots[j]), float(knots[j + 1])],
            "z_drift": z_drift,
            "J_inf": float(J),
            "L_residual_max": L_rel,
            "phi_zero_times": zero_times(t[sub], F, th["zero_tol"]),
            "verdicts": verdicts,
            "pass": all(v["pass"] for v in verdicts.values()),
        })
        scale = Fn.max() if Fn.max() > 0 else 1.0
        phi_ends.append((float(Fn[0] / scale), float(Fn[-1] / scale)))

    return {
        "segments": segments,
        "any_segment_passes": any(s["pass"] for s in segments),
        "phi_start_relative": phi_ends[0][0],
        "phi_end_relative": phi_ends[-1][1],
        "start_condition": phi_ends[0][0] <= th["zero_tol"],
        "end_condition": phi_ends[-1][1] <= th["zero_tol"],
    }
