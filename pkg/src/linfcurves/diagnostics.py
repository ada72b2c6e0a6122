"""Measurements that decide whether a sampled curve meets the extremal conditions.

The report checks, for one trajectory: constancy of the covariant
acceleration norm, the residual of ``L(phi * covariant acceleration) = 0``,
manifold constraints, SO(3) conserved quantities, the zero set of ``phi`` and
the J-infinity value. ``phi`` is only defined up to a positive factor, so
residuals are reported relative to the size of the field.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .lie import conserved_samples, relative_drift
from .manifolds import (SO3, SPHERE, L_operator_samples, covariant_derivative_samples,
                        edge_trim)

REPORT_VERSION = 1

DEFAULT_THRESHOLDS = {
    "z_drift": 1e-6,
    "conserved_drift": 1e-6,
    "L_residual": 1e-3,
    "sphere_constraint": 1e-9,
    # L residual is only judged on grids at least this fine
    "L_max_grid": 1e-2,
    "zero_tol": 1e-6,
}


@dataclass
class DiagnosticsReport:
    z: float | None
    z_drift: float
    J_inf: float
    phi_min: float | None
    phi_zero_times: list
    L_residual_max: float | None
    grid_step: float
    constraint_drifts: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    version: int = REPORT_VERSION

    @property
    def passed(self):
        return all(v["pass"] for v in self.verdicts.values())

    def to_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return d

    def to_json(self):
        return json.dumps(_jsonable(self.to_dict()), indent=2, sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def acceleration_samples(traj):
    """Covariant acceleration along ``traj``.

    Taken from the state when the trajectory carries it; otherwise by finite
    differences of the velocity samples.
    """
    try:
        return traj.acceleration
    except (KeyError, AttributeError):
        return covariant_derivative_samples(traj.manifold, traj.times, traj.position,
                                            traj.velocity, traj.velocity)


def j_infinity(traj):
    """Max over the grid of the covariant acceleration norm."""
    return float(np.linalg.norm(acceleration_samples(traj), axis=1).max())


def field_samples(traj):
    """``phi * covariant acceleration`` if the trajectory determines ``phi``.

    Extremal runs carry the field directly; sampled closed-form curves may
    store ``phi`` in ``meta``. Returns ``None`` otherwise.
    """
    F = traj.field
    if F is not None:
        return F
    phi = traj.meta.get("phi")
    if phi is not None:
        return np.asarray(phi)[:, None] * acceleration_samples(traj)
    return None


def zero_times(times, F, tol=1e-6, events=()):
    """Times where the vector field ``F`` vanishes (relative to its size).

    Interior zeros are detected as sign reversals ``<F_i, F_{i+1}> < 0`` whose
    chord passes within ``tol * max|F|`` of the origin and located by the
    chord parameter (exact for affine ``F``); endpoint zeros by the norm.
    Event times recorded by the integrator are merged in.
    """
    nrm = np.linalg.norm(F, axis=1)
    scale = nrm.max()
    found = [float(t) for t in (e.time for e in events)]
    if scale == 0:
        return sorted(found)
    thr = tol * scale
    for i in range(len(times) - 1):
        a, b = F[i], F[i + 1]
        if nrm[i] <= thr and (i == 0 or nrm[i] <= nrm[i - 1]):
            found.append(float(times[i]))
            continue
        if a @ b < 0:
            d = b - a
            s = float(np.clip(-(a @ d) / (d @ d), 0.0, 1.0))
            if np.linalg.norm(a + s * d) <= thr:
                found.append(float(times[i] + s * (times[i + 1] - times[i])))
    if nrm[-1] <= thr:
        found.append(float(times[-1]))
    found.sort()
    merged = []
    h = times[1] - times[0] if len(times) > 1 else 0.0
    for t in found:
        if not merged or t - merged[-1] > h:
            merged.append(t)
    return merged


def _verdict(value, threshold):
    return {"value": value, "threshold": threshold,
            "pass": bool(value is not None and value <= threshold)}


def analyze(traj, thresholds=None):
    """Build a :class:`DiagnosticsReport` for ``traj``.

    Needs at least 5 uniform samples. Verdicts are only issued for metrics
    that apply to the trajectory's manifold and system.
    """
    th = dict(DEFAULT_THRESHOLDS)
    th.update(thresholds or {})
    t = traj.times
    if len(t) < 5:
        raise ValueError("insufficient samples: need at least 5")
    h = float(np.max(np.diff(t)))

    acc = acceleration_samples(traj)
    anorm = np.linalg.norm(acc, axis=1)
    J = float(anorm.max())
    z_drift = float((anorm.max() - anorm.min()) / J) if J > 0 else 0.0
    verdicts = {"z_constant": _verdict(z_drift, th["z_drift"])}

    F = field_samples(traj)
    L_max = phi_min = None
    zeros = []
    if F is not None:
        Fn = np.linalg.norm(F, axis=1)
        z = traj.z or J
        phi_min = float(Fn.min() / z) if z > 0 else float(Fn.min())
        zeros = zero_times(t, F, th["zero_tol"], traj.events)
        if Fn.max() == 0:
            L_max = 0.0
        elif h <= th["L_max_grid"]:
            res = L_operator_samples(traj.manifold, t, traj.position, traj.velocity, F)
            k = edge_trim(len(t))
            L_max = float(np.linalg.norm(res, axis=1)[k:-k].max() / Fn.max())
        if L_max is not None:
            verdicts["L_residual"] = _verdict(L_max, th["L_residual"])

    drifts = {}
    if traj.manifold.kind == SPHERE:
        x, v = traj.position, traj.velocity
        drifts["sphere_norm"] = float(np.max(np.abs(np.linalg.norm(x, axis=1) - 1.0)))
        drifts["velocity_tangency"] = float(np.max(np.abs(np.sum(x * v, axis=1))))
        if traj.field is not None:
            X = traj.field
            Xd = traj.states[:, 3 * traj.n:4 * traj.n]
            drifts["field_tangency"] = float(np.max(np.abs(np.sum(x * X, axis=1))))
            drifts["field_rate_tangency"] = float(np.max(np.abs(
                np.sum(v * X, axis=1) + np.sum(x * Xd, axis=1))))
        for k, v_ in drifts.items():
            verdicts[k] = _verdict(v_, th["sphere_constraint"])
    elif traj.manifold.kind == SO3 and traj.field is not None and traj.C is not None:
        c, a = conserved_samples(traj)
        drifts["c"] = relative_drift(c)
        drifts["a"] = relative_drift(a)
        z = traj.z
        relation = z * z * (np.linalg.norm(traj.field, axis=1) / z) - traj.velocity @ traj.C \
            if z > 0 else -(traj.velocity @ traj.C)
        drifts["z2phi_minus_CV"] = relative_drift(relation)
        for k in ("c", "a", "z2phi_minus_CV"):
            verdicts[k] = _verdict(drifts[k], th["conserved_drift"])

    return DiagnosticsReport(
        z=traj.z, z_drift=z_drift, J_inf=J, phi_min=phi_min, phi_zero_times=zeros,
        L_residual_max=L_max, grid_step=h, constraint_drifts=drifts, verdicts=verdicts)


def _primary(traj, states):
    """Coordinates compared between runs: positions, or ``V`` on SO(3)."""
    if traj.manifold.kind == SO3:
        return states[:, 0:3]
    return states[:, 0:traj.n]


def compare(traj_a, traj_b, metric="endpoint"):
    """Discrepancy between two runs over their common span.

    ``endpoint`` compares the primary coordinates at the end of the overlap;
    ``pointwise_max`` takes the max-norm difference over ``traj_a``'s samples
    in the overlap, evaluating ``traj_b`` by its dense output (or a cubic
    spline through its samples).
    """
    lo = max(traj_a.times[0], traj_b.times[0])
    hi = min(traj_a.times[-1], traj_b.times[-1])
    if lo > hi:
        raise ValueError("trajectories have disjoint spans")
    if metric == "endpoint":
        ya = _primary(traj_a, traj_a.at(hi) if traj_a.times[-1] != hi else traj_a.states[-1:])
        yb = _primary(traj_b, traj_b.at(hi) if traj_b.times[-1] != hi else traj_b.states[-1:])
        return float(np.max(np.abs(ya - yb)))
    if metric == "pointwise_max":
        eps = 1e-12 * max(1.0, abs(hi))
        mask = (traj_a.times >= lo - eps) & (traj_a.times <= hi + eps)
        ts = traj_a.times[mask]
        ya = _primary(traj_a, traj_a.states[mask])
        if np.array_equal(ts, traj_b.times):
            yb = _primary(traj_b, traj_b.states)
        else:
            yb = _primary(traj_b, traj_b.at(np.clip(ts, lo, hi)))
        return float(np.max(np.abs(ya - yb)))
    raise ValueError(f"unknown metric {metric!r}")
