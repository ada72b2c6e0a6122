"""Run configurations: a serializable description of one computation.

A :class:`RunConfig` round-trips through JSON unchanged. :func:`validate`
returns every problem it finds rather than stopping at the first.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields

from .integrator import DEFAULT_ATOL, DEFAULT_RTOL, DEFAULT_SAMPLES
from .manifolds import EUCLIDEAN, KINDS, SO3, SPHERE

CONFIG_VERSION = 1

MODES = ("ivp", "bvp", "check", "baseline")
SYSTEMS = ("sphere_extremal", "so3_reduced", "riemannian_cubic", "euclid_closed_form")
OUTPUTS = ("csv", "json")

# named initial arrays each (mode, system) needs; dimensions are checked
# against the manifold's ambient dimension
INITIAL_KEYS = {
    "sphere_extremal": ("x", "xdot", "X", "Xdot"),
    "so3_reduced": ("V", "W"),
    "riemannian_cubic": ("x", "xdot", "A", "B"),
}
SYSTEM_MANIFOLDS = {
    "sphere_extremal": (SPHERE, EUCLIDEAN),
    "so3_reduced": (SO3,),
    "riemannian_cubic": (SPHERE, EUCLIDEAN),
    "euclid_closed_form": (EUCLIDEAN,),
}
MODE_SYSTEMS = {
    "ivp": ("sphere_extremal", "so3_reduced", "riemannian_cubic"),
    "check": ("sphere_extremal", "so3_reduced", "riemannian_cubic"),
    "bvp": ("sphere_extremal", "euclid_closed_form"),
    "baseline": ("riemannian_cubic",),
}
SPHERE_TOL = 1e-9


@dataclass
class RunConfig:
    manifold: dict
    mode: str
    system: str
    span: list
    z: float | None = None
    C: list | None = None
    initial: dict = field(default_factory=dict)
    boundary: dict = field(default_factory=dict)
    knots: dict = field(default_factory=dict)
    variant: str = "full_velocities"
    restarts: int = 32
    seed: int = 0
    rtol: float = DEFAULT_RTOL
    atol: float = DEFAULT_ATOL
    sample_count: int = DEFAULT_SAMPLES
    output: str = "csv"
    thresholds: dict = field(default_factory=dict)
    version: int = CONFIG_VERSION

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        missing = [k for k in ("manifold", "mode", "system", "span") if k not in d]
        if missing:
            raise ValueError(f"missing config keys: {', '.join(missing)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _is_vec(v, n=None):
    if not isinstance(v, (list, tuple)):
        return False
    if not all(isinstance(a, (int, float)) and not isinstance(a, bool) and math.isfinite(a)
               for a in v):
        return False
    return n is None or len(v) == n


def _norm(v):
    return math.sqrt(sum(a * a for a in v))


def _dot(a, b):
    return sum(p * q for p, q in zip(a, b))


def _check_manifold(cfg, errors):
    m = cfg.manifold
    if not isinstance(m, dict) or "kind" not in m or "dim" not in m:
        errors.append("manifold must be an object with 'kind' and 'dim'")
        return None
    if m["kind"] not in KINDS:
        errors.append(f"unknown manifold kind {m['kind']!r}")
        return None
    if not isinstance(m["dim"], int) or m["dim"] < 1:
        errors.append("manifold dim must be a positive integer")
        return None
    if m["kind"] == SO3 and m["dim"] != 3:
        errors.append("so3 has dim 3")
        return None
    return m["dim"] + 1 if m["kind"] == SPHERE else m["dim"]


def _check_on_sphere(name, x, errors):
    if abs(_norm(x) - 1.0) > SPHERE_TOL:
        errors.append(f"{name} not on sphere (tolerance 1e-9)")


def _check_initial(cfg, n, kind, errors):
    keys = INITIAL_KEYS[cfg.system]
    ok = True
    for k in keys:
        v = cfg.initial.get(k)
        want = 3 if cfg.system == "so3_reduced" else n
        if v is None:
            errors.append(f"initial.{k} is required")
            ok = False
        elif not _is_vec(v, want):
            errors.append(f"initial.{k} must be {want} finite numbers")
            ok = False
    extra = sorted(set(cfg.initial) - set(keys) - {"R0"})
    if extra:
        errors.append(f"unknown initial keys: {', '.join(extra)}")
    if "R0" in cfg.initial:
        R = cfg.initial["R0"]
        if cfg.system != "so3_reduced":
            errors.append("initial.R0 only applies to so3_reduced")
        elif not (isinstance(R, list) and len(R) == 3 and all(_is_vec(r, 3) for r in R)):
            errors.append("initial.R0 must be a 3x3 nested list")
    if not ok or kind != SPHERE:
        return
    x = cfg.initial["x"]
    _check_on_sphere("x", x, errors)
    second = "X" if cfg.system == "sphere_extremal" else "A"
    for k in ("xdot", second):
        if abs(_dot(x, cfg.initial[k])) > SPHERE_TOL:
            errors.append(f"{k} not tangent at x (tolerance 1e-9)")


def _check_boundary(cfg, n, kind, errors):
    b = cfg.boundary
    need = ("x0", "x1", "v0") + (("v1",) if cfg.variant == "full_velocities" else ())
    for k in need:
        if k not in b:
            errors.append(f"boundary.{k} is required")
        elif not _is_vec(b[k], n):
            errors.append(f"boundary.{k} must be {n} finite numbers")
    extra = sorted(set(b) - {"x0", "x1", "v0", "v1"})
    if extra:
        errors.append(f"unknown boundary keys: {', '.join(extra)}")
    if kind == SPHERE:
        for p, v in (("x0", "v0"), ("x1", "v1")):
            if _is_vec(b.get(p), n):
                _check_on_sphere(p, b[p], errors)
                if _is_vec(b.get(v), n) and abs(_dot(b[p], b[v])) > SPHERE_TOL:
                    errors.append(f"{v} not tangent at {p} (tolerance 1e-9)")
    if cfg.variant not in ("full_velocities", "free_end_velocity"):
        errors.append(f"unknown variant {cfg.variant!r}")
    elif cfg.variant == "free_end_velocity" and cfg.system == "euclid_closed_form":
        errors.append("euclid_closed_form needs both velocities; use sphere_extremal "
                      "shooting on a euclidean manifold for the free-end variant")
    if not isinstance(cfg.restarts, int) or cfg.restarts < 1:
        errors.append("restarts must be a positive integer")


def _check_knots(cfg, n, errors):
    k = cfg.knots
    t, pts = k.get("times"), k.get("points")
    if not _is_vec(t) or len(t) < 2:
        errors.append("knots.times must hold at least 2 numbers")
        return
    if any(b <= a for a, b in zip(t, t[1:])):
        errors.append("knots.times must be strictly increasing")
    if not isinstance(pts, list) or len(pts) != len(t) or not all(_is_vec(p, n) for p in pts):
        errors.append(f"knots.points must be {len(t)} points of {n} finite numbers")


def validate(cfg):
    """Every violation in ``cfg`` as a list of messages (empty when valid)."""
    errors = []
    if cfg.version != CONFIG_VERSION:
        errors.append(f"unsupported config version {cfg.version!r}")
    if cfg.mode not in MODES:
        errors.append(f"unknown mode {cfg.mode!r}")
    if cfg.system not in SYSTEMS:
        errors.append(f"unknown system {cfg.system!r}")
    if cfg.output not in OUTPUTS:
        errors.append(f"unknown output format {cfg.output!r}")
    n = _check_manifold(cfg, errors)
    kind = cfg.manifold.get("kind") if isinstance(cfg.manifold, dict) else None

    if not _is_vec(cfg.span, 2):
        errors.append("span must be two finite numbers")
    elif not cfg.span[0] < cfg.span[1]:
        errors.append("span not increasing")
    if not isinstance(cfg.sample_count, int) or isinstance(cfg.sample_count, bool) \
            or cfg.sample_count < 2:
        errors.append("sample_count must be an integer >= 2")
    for name in ("rtol", "atol"):
        v = getattr(cfg, name)
        if not isinstance(v, (int, float)) or not v > 0:
            errors.append(f"{name} must be positive")

    if cfg.mode in MODES and cfg.system in SYSTEMS:
        if cfg.system not in MODE_SYSTEMS[cfg.mode]:
            errors.append(f"system {cfg.system!r} is not available in mode {cfg.mode!r}")
        if kind in KINDS and kind not in SYSTEM_MANIFOLDS[cfg.system]:
            errors.append(f"system {cfg.system!r} does not run on manifold {kind!r}")

    uses_z = cfg.system in ("sphere_extremal", "so3_reduced") and cfg.mode in ("ivp", "check")
    if uses_z:
        if cfg.z is None:
            errors.append("z is required")
        elif not isinstance(cfg.z, (int, float)) or not cfg.z >= 0:
            errors.append("z must be a nonnegative number")
    if cfg.system == "so3_reduced":
        if cfg.C is None:
            errors.append("C is required for so3_reduced")
        elif not _is_vec(cfg.C, 3):
            errors.append("C must be 3 finite numbers")
    elif cfg.C is not None:
        errors.append("C only applies to so3_reduced")

    if n is None or cfg.system not in SYSTEMS or cfg.mode not in MODES:
        return errors
    if cfg.mode in ("ivp", "check"):
        if cfg.system in INITIAL_KEYS:
            _check_initial(cfg, n, kind, errors)
    elif cfg.mode == "bvp":
        _check_boundary(cfg, n, kind, errors)
    elif cfg.mode == "baseline":
        if kind != EUCLIDEAN:
            errors.append("baseline spline runs on euclidean manifolds")
        _check_knots(cfg, n, errors)
    return errors


PRESETS = {
    "sphere-example": RunConfig(
        manifold={"kind": SPHERE, "dim": 2}, mode="ivp", system="sphere_extremal",
        span=[0.0, 8.0], z=1.2,
        initial={"x": [1.0, 0.0, 0.0], "xdot": [0.0, 1.0, 0.0],
                 "X": [0.0, 1.0, 200.0], "Xdot": [-1.0, 2.0, 1.0]},
        sample_count=8001),
    "so3-example-long": RunConfig(
        manifold={"kind": SO3, "dim": 3}, mode="ivp", system="so3_reduced",
        span=[0.0, 700.0], z=1.2, C=[-2.0, -1.0, 0.0],
        initial={"V": [1.0, 2.0, 3.0], "W": [-1.0, -4.0, 6.0]},
        sample_count=2048),
    "so3-example-short": RunConfig(
        manifold={"kind": SO3, "dim": 3}, mode="ivp", system="so3_reduced",
        span=[0.0, 5.0], z=1.2, C=[2.0, 1.0, 0.0],
        initial={"V": [1.0, 2.0, 3.0], "W": [-1.0, -4.0, 6.0]},
        sample_count=5001),
}


def preset(name):
    """A fresh copy of the named preset."""
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    return RunConfig.from_dict(json.loads(PRESETS[name].to_json()))
