"""Input validation shared by the estimators and solvers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.utils import check_array


@dataclass(frozen=True)
class BoundaryData:
    """Endpoint positions and velocities on ``[t0, t1]``.

    ``v1`` may be ``None`` for the free-end-velocity problem.
    """

    x0: np.ndarray
    x1: np.ndarray
    v0: np.ndarray
    v1: np.ndarray | None
    t0: float
    t1: float

    def __post_init__(self):
        if not float(self.t0) < float(self.t1):
            raise ValueError("t0 must be less than t1")
        dims = {np.shape(v) for v in (self.x0, self.x1, self.v0, self.v1) if v is not None}
        if len(dims) != 1:
            raise ValueError("boundary vectors have inconsistent dimensions")

    @property
    def dim(self):
        return len(self.x0)

    @property
    def duration(self):
        return float(self.t1) - float(self.t0)

    def to_dict(self):
        return {
            "x0": list(map(float, self.x0)), "x1": list(map(float, self.x1)),
            "v0": list(map(float, self.v0)),
            "v1": None if self.v1 is None else list(map(float, self.v1)),
            "t0": float(self.t0), "t1": float(self.t1),
        }


def check_boundary(times, points, velocities=None, require_end_velocity=True):
    """Turn estimator-style ``fit`` arguments into :class:`BoundaryData`.

    ``times`` is ``[t0, t1]``, ``points`` a ``(2, d)`` array and
    ``velocities`` either ``(2, d)`` or, for a free end, ``(1, d)``.
    """
    times = check_array(np.asarray(times, dtype=float).reshape(-1, 1)).ravel()
    if times.shape[0] != 2:
        raise ValueError("expected exactly two boundary times")
    points = check_array(points)
    if points.shape[0] != 2:
        raise ValueError("expected two boundary points")
    if velocities is None:
        raise ValueError("boundary velocities are required")
    velocities = check_array(velocities)
    if velocities.shape[1] != points.shape[1]:
        raise ValueError("velocities and points have different dimensions")
    if velocities.shape[0] == 1 and not require_end_velocity:
        v1 = None
    elif velocities.shape[0] == 2:
        v1 = velocities[1]
    else:
        raise ValueError("expected velocities at both ends")
    return BoundaryData(points[0], points[1], velocities[0], v1, times[0], times[1])


def check_knots(times, points):
    """Validate interpolation knots: strictly increasing times, finite points."""
    times = check_array(np.asarray(times, dtype=float).reshape(-1, 1)).ravel()
    points = check_array(points)
    if times.shape[0] < 2:
        raise ValueError("need at least 2 knots")
    if points.shape[0] != times.shape[0]:
        raise ValueError("times and points differ in length")
    if np.any(np.diff(times) <= 0):
        raise ValueError("knot times must be strictly increasing (duplicate knot times?)")
    return times, points


def check_times(t):
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise ValueError("times must be finite")
    return t
