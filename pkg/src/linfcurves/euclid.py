"""Closed-form minimum-L-infinity-acceleration curves in Euclidean space.

An extremal in E^m satisfies ``phi(t) x''(t) = A + B t`` with ``|x''| = z``.
Three shapes occur:

* ``geodesic`` -- ``z = 0``, uniform straight-line motion;
* ``quadratic_spline`` -- ``A + B t`` vanishes at ``t2``, the acceleration is
  ``z sign(t - t2) B/|B|`` and the curve is a C^1 piecewise quadratic;
* ``generic`` -- ``A``, ``B`` independent; after shifting time so that
  ``<A, B> = 0`` the position has the closed form used in
  :func:`_generic_profile`.

Also here: the Hermite and natural cubic baselines and exact J-infinity
evaluation for piecewise polynomials.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline, PPoly
from scipy.optimize import least_squares, minimize_scalar
from scipy.stats import qmc
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .validation import BoundaryData, check_boundary, check_knots, check_times

logger = logging.getLogger(__name__)

GEODESIC = "geodesic"
QUADRATIC_SPLINE = "quadratic_spline"
GENERIC = "generic"


class ConvergenceError(RuntimeError):
    """No candidate branch met the boundary tolerance."""


@dataclass(frozen=True)
class EuclidBranch:
    """One closed-form extremal.

    Position is ``z * P(t - shift) + C t + D`` where ``P`` depends on the
    branch. For ``generic`` branches ``A`` and ``B`` are stored in the
    shifted frame, where they are orthogonal; non-orthogonal input is
    canonicalized by moving the shift.
    """

    tag: str
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    z: float = 0.0
    t2: float | None = None
    shift: float = 0.0

    def __post_init__(self):
        arrs = {k: np.asarray(getattr(self, k), dtype=float) for k in "ABCD"}
        for k, v in arrs.items():
            object.__setattr__(self, k, v)
        if len({v.shape for v in arrs.values()}) != 1:
            raise ValueError("branch vectors have inconsistent dimensions")
        if self.z < 0:
            raise ValueError("z must be nonnegative")
        A, B = arrs["A"], arrs["B"]
        if self.tag == GEODESIC:
            if self.z != 0 or np.any(A) or np.any(B):
                raise ValueError("geodesic branch needs z = 0 and A = B = 0")
        elif self.tag == QUADRATIC_SPLINE:
            if self.t2 is None or not np.any(B):
                raise ValueError("quadratic spline needs B != 0 and t2")
            if np.linalg.norm(A + B * self.t2) > 1e-9 * max(1.0, np.linalg.norm(A)):
                raise ValueError("quadratic spline needs A + B t2 = 0")
        elif self.tag == GENERIC:
            beta2 = B @ B
            if beta2 == 0:
                raise ValueError("generic branch needs A, B linearly independent")
            s = -(A @ B) / beta2
            A = A + s * B
            if np.linalg.norm(A) <= 1e-12 * np.sqrt(beta2):
                raise ValueError("generic branch needs A, B linearly independent")
            object.__setattr__(self, "A", A)
            object.__setattr__(self, "shift", float(self.shift + s))
        else:
            raise ValueError(f"unknown branch tag {self.tag!r}")

    @property
    def dim(self):
        return self.A.shape[0]

    @classmethod
    def geodesic(cls, C, D):
        C = np.asarray(C, dtype=float)
        zero = np.zeros_like(C)
        return cls(GEODESIC, zero, zero, C, D)

    @classmethod
    def quadratic_spline(cls, B, t2, z, C, D):
        B = np.asarray(B, dtype=float)
        return cls(QUADRATIC_SPLINE, -B * t2, B, C, D, z=z, t2=float(t2))

    @classmethod
    def generic(cls, A, B, z, C, D, shift=0.0):
        return cls(GENERIC, A, B, C, D, z=z, shift=shift)

    def to_dict(self):
        return {"tag": self.tag, "A": self.A.tolist(), "B": self.B.tolist(),
                "C": self.C.tolist(), "D": self.D.tolist(), "z": float(self.z),
                "t2": self.t2, "shift": self.shift}


def _generic_profile(A, B, tau):
    """``P, P', P''`` of the generic branch for orthogonal ``A``, ``B``.

    ``P'' = (A + B tau)/sqrt(alpha^2 + beta^2 tau^2)``. The logarithm
    ``log(beta tau + r)`` is evaluated as ``log(alpha) + asinh(beta tau/alpha)``
    to avoid cancellation for negative ``tau``.
    """
    alpha = np.linalg.norm(A)
    beta = np.linalg.norm(B)
    tau = np.asarray(tau, dtype=float)[:, None]
    r = np.sqrt(alpha**2 + beta**2 * tau**2)
    lg = np.log(alpha) + np.arcsinh(beta * tau / alpha)
    bt = beta * tau
    P = ((bt * lg - r) / beta**2) * A + ((alpha**2 * lg + bt * r) / (2 * beta**3)) * B
    dP = (lg / beta) * A + (r / beta**2) * B
    ddP = (A + B * tau) / r
    return P, dP, ddP


def eval_branch(branch, t):
    """Position, velocity and acceleration of ``branch`` at times ``t``.

    Scalar ``t`` gives 1-D vectors; array ``t`` gives ``(len(t), m)`` arrays.
    At the kink of a quadratic spline the acceleration is the right limit.
    """
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(check_times(t))
    C, D = branch.C, branch.D
    lin = t[:, None] * C + D
    if branch.tag == GEODESIC:
        pos, vel, acc = lin, np.broadcast_to(C, lin.shape).copy(), np.zeros_like(lin)
    elif branch.tag == QUADRATIC_SPLINE:
        b = branch.B / np.linalg.norm(branch.B)
        s = (t - branch.t2)[:, None]
        sgn = np.where(s >= 0, 1.0, -1.0)
        pos = branch.z * 0.5 * s * np.abs(s) * b + lin
        vel = branch.z * np.abs(s) * b + C
        acc = branch.z * sgn * b * np.ones_like(lin)
    else:
        P, dP, ddP = _generic_profile(branch.A, branch.B, t - branch.shift)
        pos = branch.z * P + lin
        vel = branch.z * dP + C
        acc = branch.z * ddP
    if scalar:
        return pos[0], vel[0], acc[0]
    return pos, vel, acc


def branch_phi(branch, t):
    """``phi(t) = |A + B (t - shift)| / z`` (zero for geodesics)."""
    t = np.atleast_1d(check_times(t))
    if branch.tag == GEODESIC:
        return np.zeros_like(t)
    tau = t - branch.shift
    return np.linalg.norm(branch.A + np.outer(tau, branch.B), axis=1) / branch.z


def boundary_residual(branch, data):
    """Max-norm mismatch of the four boundary conditions."""
    pos, vel, _ = eval_branch(branch, np.array([data.t0, data.t1]))
    errs = [pos[0] - data.x0, pos[1] - data.x1, vel[0] - data.v0]
    if data.v1 is not None:
        errs.append(vel[1] - data.v1)
    return float(max(np.max(np.abs(e)) for e in errs))


# -- fitting -----------------------------------------------------------------

def _targets(data):
    T = data.duration
    dv = data.v1 - data.v0
    e = data.x1 - data.x0 - data.v0 * T
    return dv, e


def _fit_quadratic_splines(data, tol):
    """All quadratic-spline branches matching ``data`` (closed form)."""
    dv, e = _targets(data)
    T = data.duration
    ref = max(np.linalg.norm(dv), np.linalg.norm(e))
    if ref == 0:
        return []
    w = dv / np.linalg.norm(dv) if np.linalg.norm(dv) >= np.linalg.norm(e) else e / np.linalg.norm(e)
    dvs, es = dv @ w, e @ w
    if max(np.linalg.norm(dv - dvs * w), np.linalg.norm(e - es * w)) > tol * max(1.0, ref):
        return []
    # (T - 2s) es - ((T - s)^2 - T^2/2) dvs = 0 with s = t2 - t0 in [0, T]
    coeffs = [-dvs, 2 * T * dvs - 2 * es, T * es - 0.5 * T**2 * dvs]
    if abs(dvs) <= 1e-15 * ref:
        roots = np.array([0.5 * T])
    else:
        roots = np.roots(coeffs)
    out = []
    for s in roots:
        if abs(np.imag(s)) > 1e-12 * T:
            continue
        s = float(np.clip(np.real(s), 0.0, T))
        g1, g2 = T - 2 * s, (T - s) ** 2 - 0.5 * T**2
        zeta = dvs / g1 if abs(g1) >= abs(g2) else es / g2
        if not np.isfinite(zeta) or zeta == 0:
            continue
        b = np.sign(zeta) * w
        z = abs(zeta)
        t2 = data.t0 + s
        C = data.v0 - z * abs(data.t0 - t2) * b
        D = data.x0 - z * 0.5 * (data.t0 - t2) * abs(data.t0 - t2) * b - C * data.t0
        out.append(EuclidBranch.quadratic_spline(b, t2, z, C, D))
    return out


def _direction_integrals(Ap, Bp, data):
    """``int u`` and ``int (t1 - s) u`` for ``u = (A' + B' s)/|A' + B' s|``."""
    beta2 = Bp @ Bp
    s = -(Ap @ Bp) / beta2
    A = Ap + s * Bp
    tau = np.array([data.t0 - s, data.t1 - s])
    P, dP, _ = _generic_profile(A, Bp, tau)
    g1 = dP[1] - dP[0]
    g2 = P[1] - P[0] - dP[0] * data.duration
    return np.concatenate([g1, g2]), A, s


def _generic_from_params(params, data):
    m = data.dim
    Ap, Bp = params[:m], params[m:]
    g, A, s = _direction_integrals(Ap, Bp, data)
    dv, e = _targets(data)
    h = np.concatenate([dv, e])
    z = (g @ h) / (g @ g)
    if z < 0:
        Ap, Bp, z = -Ap, -Bp, -z
        g, A, s = _direction_integrals(Ap, Bp, data)
    tau0 = np.array([data.t0 - s])
    P0, dP0, _ = _generic_profile(A, Bp, tau0)
    C = data.v0 - z * dP0[0]
    D = data.x0 - z * P0[0] - C * data.t0
    return EuclidBranch.generic(A, Bp, z, C, D, shift=s)


def _generic_residual(params, data, h):
    m = data.dim
    Ap, Bp = params[:m], params[m:]
    nrm = np.linalg.norm(params)
    if nrm == 0 or Bp @ Bp == 0:
        return np.full(2 * m, 1e6)
    Ap, Bp = Ap / nrm, Bp / nrm
    with np.errstate(all="ignore"):
        g, A, _ = _direction_integrals(Ap, Bp, data)
        if np.linalg.norm(A) < 1e-12 or not np.all(np.isfinite(g)):
            return np.full(2 * m, 1e6)
        z = (g @ h) / (g @ g)
    return z * g - h


def _hermite_guess(data):
    """Acceleration ``a0 + a1 (t - t0)`` of the Hermite cubic, as ``(A', B')``."""
    T = data.duration
    dv, e = _targets(data)
    # x(t0 + s) = x0 + v0 s + c2 s^2 + c3 s^3
    c3 = (T * dv - 2 * e) / T**3
    c2 = (e - c3 * T**3) / T**2
    a0, a1 = 2 * c2, 6 * c3
    return np.concatenate([a0 - a1 * data.t0, a1])


def solve_euclid_bvp(data, n_restarts=16, tol=1e-9, random_state=0, return_all=False):
    """Fit closed-form extremals to boundary positions and velocities.

    Tries, in order, the geodesic, generic fits (damped least squares over
    the direction line ``A' + B' t`` from a Hermite-cubic guess and
    quasi-random restarts), and quadratic splines (closed form). Returns the
    converged branch with the smallest ``z``; ``return_all=True`` returns
    every converged branch sorted by ``z``.
    """
    if data.v1 is None:
        raise ValueError("both velocities are required")
    dv, e = _targets(data)
    scale = max(1.0, np.max(np.abs(np.concatenate([data.x0, data.x1, data.v0, data.v1]))))
    if max(np.max(np.abs(dv)), np.max(np.abs(e))) <= 1e-14 * scale:
        br = EuclidBranch.geodesic(data.v0, data.x0 - data.v0 * data.t0)
        return [br] if return_all else br

    m = data.dim
    h = np.concatenate([dv, e])
    candidates = []
    seeds = [_hermite_guess(data)]
    if n_restarts > 1:
        sob = qmc.Sobol(2 * m, scramble=True, seed=random_state)
        seeds += list(2 * sob.random(int(2 ** np.ceil(np.log2(n_restarts - 1)))) - 1)[:n_restarts - 1]
    for p0 in seeds:
        if np.linalg.norm(p0[m:]) < 1e-12 * max(1.0, np.linalg.norm(p0)):
            continue
        sol = least_squares(_generic_residual, p0, args=(data, h), method="lm",
                            xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
        try:
            br = _generic_from_params(sol.x / np.linalg.norm(sol.x), data)
        except (ValueError, FloatingPointError):
            continue
        if boundary_residual(br, data) <= tol:
            candidates.append(br)
    # closed-form splines go first so they survive de-duplication against
    # nearly degenerate generic fits of the same curve
    candidates = [b for b in _fit_quadratic_splines(data, tol)
                  if boundary_residual(b, data) <= tol] + candidates
    if not candidates:
        raise ConvergenceError(
            f"no branch met boundary tolerance {tol} after {len(seeds)} restarts")
    candidates = _distinct(candidates, data)
    zmin = min(b.z for b in candidates)
    tied = [b for b in candidates if b.z <= zmin * (1 + 1e-9) + 1e-12]
    best = min(tied, key=lambda b: boundary_residual(b, data))
    rest = sorted((b for b in candidates if b is not best), key=lambda b: b.z)
    return [best] + rest if return_all else best


def _distinct(branches, data, tol=1e-7):
    """Drop branches whose sampled positions coincide with an earlier one."""
    ts = np.linspace(data.t0, data.t1, 9)
    kept, samples = [], []
    for b in branches:
        pos = eval_branch(b, ts)[0]
        if all(np.max(np.abs(pos - q)) > tol for q in samples):
            kept.append(b)
            samples.append(pos)
    return kept


# -- baselines and J-infinity -------------------------------------------------

def hermite_cubic(data):
    """Cubic polynomial interpolating both positions and velocities."""
    return CubicHermiteSpline([data.t0, data.t1], np.vstack([data.x0, data.x1]),
                              np.vstack([data.v0, data.v1]), axis=0)


def _ppoly_accel_max(pp, grid):
    acc = pp.derivative(2)
    deg = acc.c.shape[0] - 1
    x = acc.x
    best = 0.0
    for i in range(len(x) - 1):
        a, b = x[i], x[i + 1]
        if deg <= 1:
            # the norm of an affine vector function is convex: ends suffice
            vals = np.linalg.norm(np.atleast_2d(acc([a, b]).reshape(2, -1)), axis=1)
            best = max(best, float(vals.max()))
            continue
        ts = np.linspace(a, b, grid)
        vals = np.linalg.norm(acc(ts).reshape(grid, -1), axis=1)
        j = int(np.argmax(vals))
        lo, hi = ts[max(j - 1, 0)], ts[min(j + 1, grid - 1)]
        res = minimize_scalar(lambda s: -np.linalg.norm(acc(s)), bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-14})
        best = max(best, float(vals[j]), -float(res.fun))
    return best


def j_infinity_euclid(curve, grid=2001, span=None):
    """Maximum acceleration norm of a Euclidean curve.

    ``curve`` may be an :class:`EuclidBranch` (needs ``span`` only for the
    geodesic check), a scipy ``PPoly``-like piecewise polynomial (exact per
    piece for cubics), or a callable returning accelerations (dense
    sampling over ``span``).
    """
    if isinstance(curve, EuclidBranch):
        return 0.0 if curve.tag == GEODESIC else float(curve.z)
    if isinstance(curve, PPoly):
        return _ppoly_accel_max(curve, grid)
    if span is None:
        raise ValueError("span is required for callable curves")
    ts = np.linspace(span[0], span[1], grid)
    acc = np.asarray(curve(ts)).reshape(grid, -1)
    return float(np.linalg.norm(acc, axis=1).max())


def j_two(pp):
    """Mean squared acceleration norm of a piecewise cubic (exact quadrature)."""
    acc = pp.derivative(2)
    nodes, weights = np.polynomial.legendre.leggauss(3)
    total = 0.0
    x = acc.x
    for a, b in zip(x[:-1], x[1:]):
        ts = 0.5 * (b - a) * nodes + 0.5 * (a + b)
        vals = np.sum(acc(ts).reshape(len(ts), -1) ** 2, axis=1)
        total += 0.5 * (b - a) * float(weights @ vals)
    return total / (x[-1] - x[0])


# -- estimators ---------------------------------------------------------------

class NaturalCubicSpline(RegressorMixin, BaseEstimator):
    """Natural cubic spline through knots ``(t_i, x_i)``; the J2 baseline.

    After ``fit``: ``spline_`` (scipy ``CubicSpline``), ``j2_`` and ``j_inf_``.
    """

    def fit(self, times, points):
        times, points = check_knots(times, points)
        self.spline_ = CubicSpline(times, points, bc_type="natural", axis=0)
        self.n_features_in_ = points.shape[1]
        self.j2_ = j_two(self.spline_)
        self.j_inf_ = j_infinity_euclid(self.spline_)
        return self

    def predict(self, t):
        check_is_fitted(self, "spline_")
        return self.spline_(check_times(t))

    def acceleration(self, t):
        check_is_fitted(self, "spline_")
        return self.spline_(check_times(t), 2)


def natural_cubic_baseline(times, points):
    """Fit and return a :class:`NaturalCubicSpline`."""
    return NaturalCubicSpline().fit(times, points)


class EuclideanExtremal(RegressorMixin, BaseEstimator):
    """Minimum-L-infinity-acceleration curve between two Euclidean states.

    Parameters
    ----------
    n_restarts : int
        Quasi-random restarts for the generic-branch fit.
    tol : float
        Boundary-condition tolerance for accepting a branch.
    random_state : int
        Seed of the scrambled Sobol restarts.

    Attributes
    ----------
    branch_ : EuclidBranch
        Converged branch with the smallest ``z``.
    candidates_ : list of EuclidBranch
        Every converged branch, sorted by ``z``.
    z_ : float
    """

    def __init__(self, n_restarts=16, tol=1e-9, random_state=0):
        self.n_restarts = n_restarts
        self.tol = tol
        self.random_state = random_state

    def fit(self, times, points, velocities=None):
        data = check_boundary(times, points, velocities)
        self.boundary_ = data
        self.candidates_ = solve_euclid_bvp(data, self.n_restarts, self.tol,
                                            self.random_state, return_all=True)
        self.branch_ = self.candidates_[0]
        self.z_ = float(self.branch_.z) if self.branch_.tag != GEODESIC else 0.0
        self.n_features_in_ = data.dim
        return self

    def predict(self, t):
        check_is_fitted(self, "branch_")
        return eval_branch(self.branch_, t)[0]

    def evaluate(self, t):
        """``(position, velocity, acceleration)`` at ``t``."""
        check_is_fitted(self, "branch_")
        return eval_branch(self.branch_, t)


def branch_trajectory(branch, span, n_samples=2048):
    """Sample a branch as a :class:`~linfcurves.integrator.Trajectory`."""
    from .integrator import Trajectory
    from .manifolds import ManifoldId

    t = np.linspace(span[0], span[1], n_samples)
    pos, vel, acc = eval_branch(branch, t)
    return Trajectory(ManifoldId.euclidean(branch.dim), "curve", t,
                      np.hstack([pos, vel, acc]),
                      params={"z": float(branch.z)},
                      meta={"phi": branch_phi(branch, t), "branch": branch.tag})


def spline_trajectory(pp, span=None, n_samples=2048):
    """Sample a piecewise polynomial as a :class:`Trajectory`."""
    from .integrator import Trajectory
    from .manifolds import ManifoldId

    lo, hi = (pp.x[0], pp.x[-1]) if span is None else span
    t = np.linspace(lo, hi, n_samples)
    pos = pp(t).reshape(n_samples, -1)
    return Trajectory(ManifoldId.euclidean(pos.shape[1]), "curve", t,
                      np.hstack([pos, pp(t, 1).reshape(n_samples, -1),
                                 pp(t, 2).reshape(n_samples, -1)]))
