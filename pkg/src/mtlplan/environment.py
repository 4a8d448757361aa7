"""Polygonal workspaces, moving obstacles and the time-varying labeling map."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

OBSTACLE_ATOM = "O"


class ScenarioError(ValueError):
    """Invalid scenario document; ``path`` names the offending field."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


@dataclass(frozen=True)
class Halfspace:
    """The set ``{x : h @ x <= k}``."""

    h: tuple
    k: float

    def __post_init__(self):
        h = tuple(float(v) for v in self.h)
        if not np.linalg.norm(h) > 0:
            raise ValueError("halfspace normal must be nonzero")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "k", float(self.k))

    def value(self, x) -> float:
        """Signed violation ``h @ x - k`` (negative inside)."""
        return float(np.dot(self.h, x) - self.k)


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


class ConvexPolygon:
    """Convex polygon stored by its vertices in counter-clockwise order."""

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise ValueError("polygon needs at least 3 planar vertices")
        area = 0.5 * sum(_cross((0.0, 0.0), v[i], v[(i + 1) % len(v)]) for i in range(len(v)))
        if abs(area) < 1e-12:
            raise ValueError("degenerate (collinear) polygon")
        if area < 0:
            v = v[::-1]
        n = len(v)
        for i in range(n):
            c = _cross(v[i], v[(i + 1) % n], v[(i + 2) % n])
            if c <= 1e-12:
                raise ValueError("polygon is not strictly convex or has collinear vertices")
        self.vertices = v
        self.vertices.setflags(write=False)
        self._halfspaces = None

    def __repr__(self):
        return f"ConvexPolygon({self.vertices.tolist()!r})"

    def __eq__(self, other):
        return isinstance(other, ConvexPolygon) and np.array_equal(self.vertices, other.vertices)

    def __hash__(self):
        return hash(self.vertices.tobytes())

    @property
    def halfspaces(self) -> list[Halfspace]:
        if self._halfspaces is None:
            self._halfspaces = halfspaces_of(self)
        return self._halfspaces

    @property
    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def contains(self, x, tol: float = 0.0) -> bool:
        return all(hs.value(x) <= tol for hs in self.halfspaces)

    def translate(self, d) -> "ConvexPolygon":
        return ConvexPolygon(self.vertices + np.asarray(d, dtype=float))

    @classmethod
    def box(cls, xmin, ymin, xmax, ymax) -> "ConvexPolygon":
        return cls([(xmin, ymin), (xmax, ymin), (xmax, ymax), (xmin, ymax)])


def halfspaces_of(p: ConvexPolygon) -> list[Halfspace]:
    """One unit-normal outward halfspace per edge, in vertex order."""
    v = p.vertices
    out = []
    for i in range(len(v)):
        a, b = v[i], v[(i + 1) % len(v)]
        d = b - a
        normal = np.array([d[1], -d[0]])
        length = np.linalg.norm(normal)
        if length == 0:
            raise ValueError("degenerate polygon edge")
        normal /= length
        out.append(Halfspace(tuple(normal), float(normal @ a)))
    return out


def polygon_from_halfspaces(hs: list[Halfspace]) -> ConvexPolygon:
    """Vertices from consecutive edge-line intersections (edges in CCW order)."""
    pts = []
    n = len(hs)
    for i in range(n):
        a, b = hs[i - 1], hs[i]
        M = np.array([a.h, b.h])
        pts.append(np.linalg.solve(M, [a.k, b.k]))
    return ConvexPolygon(pts)


def inflate(p: ConvexPolygon, r: float) -> ConvexPolygon:
    """Grow ``p`` outward by ``r`` (each offset ``k`` becomes ``k + r*|h|``)."""
    if r < 0:
        raise ValueError("inflation margin must be non-negative")
    if r == 0:
        return p
    hs = [Halfspace(h.h, h.k + r * float(np.linalg.norm(h.h))) for h in p.halfspaces]
    return polygon_from_halfspaces(hs)


@dataclass(frozen=True)
class Region:
    name: str
    polygons: tuple

    def contains(self, x, tol: float = 0.0) -> bool:
        return any(p.contains(x, tol) for p in self.polygons)


@dataclass(frozen=True)
class MovingObstacle:
    """Convex shape translated along piecewise-linear keyframes ``(time_s, offset)``."""

    shape: ConvexPolygon
    keyframes: tuple
    hold_last: bool = False
    name: str = ""

    def __post_init__(self):
        times = [k[0] for k in self.keyframes]
        if not times or times[0] != 0:
            raise ValueError("first keyframe must be at t = 0")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("keyframe times must be strictly increasing")

    def offset_at(self, time: float) -> np.ndarray:
        times = np.array([k[0] for k in self.keyframes], dtype=float)
        offs = np.array([k[1] for k in self.keyframes], dtype=float)
        if time < 0 or (time > times[-1] + 1e-9 and not self.hold_last):
            raise ValueError(f"time {time} s outside keyframe span [0, {times[-1]}]")
        return np.array([np.interp(time, times, offs[:, j]) for j in range(offs.shape[1])])


def obstacle_at(o: MovingObstacle, t: int, dt: float) -> ConvexPolygon:
    """Obstacle polygon at sample ``t`` (time ``t*dt``)."""
    off = o.offset_at(t * dt)
    if not np.any(off):
        return o.shape
    return o.shape.translate(off)


@dataclass
class Scenario:
    """A planning problem: workspace, regions, obstacles, vehicle and mission."""

    bounds: tuple  # (xmin, ymin, xmax, ymax)
    regions: dict
    static_obstacles: list
    moving_obstacles: list
    vehicle: dict
    x0: tuple
    dt: float
    specs: dict = field(default_factory=dict)
    spec: str = "true"
    N: int | None = None
    inflation: float | None = None
    loop: bool = False
    name: str = ""
    solver: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.dt > 0:
            raise ScenarioError("dt must be positive", "dt")
        if self.inflation is not None and self.inflation < 0:
            raise ScenarioError("inflation margin must be non-negative", "inflation")
        xmin, ymin, xmax, ymax = self.bounds
        if not (xmin < xmax and ymin < ymax):
            raise ScenarioError("empty workspace bounding box", "workspace")
        p = self.start_position
        if not self.in_bounds(p):
            raise ScenarioError("initial position outside workspace", "x0")
        if self.obstacle_contains(p, 0):
            raise ScenarioError("initial position inside an (inflated) obstacle", "x0")

    @property
    def start_position(self) -> np.ndarray:
        return np.asarray(self.x0[:2], dtype=float)

    @property
    def margin(self) -> float:
        """Obstacle inflation margin; defaults to ``v_max * dt / 2``."""
        if self.inflation is not None:
            return float(self.inflation)
        return float(self.vehicle.get("v_max", 0.0)) * self.dt / 2

    @property
    def diameter(self) -> float:
        xmin, ymin, xmax, ymax = self.bounds
        return math.hypot(xmax - xmin, ymax - ymin)

    @property
    def eps(self) -> float:
        """Separation band of the halfspace indicators."""
        return 1e-4 * self.diameter

    @property
    def corners(self) -> np.ndarray:
        xmin, ymin, xmax, ymax = self.bounds
        return np.array([(xmin, ymin), (xmax, ymin), (xmax, ymax), (xmin, ymax)], dtype=float)

    @property
    def propositions(self) -> set[str]:
        return set(self.regions) | {OBSTACLE_ATOM}

    def in_bounds(self, x, tol: float = 1e-9) -> bool:
        xmin, ymin, xmax, ymax = self.bounds
        return xmin - tol <= x[0] <= xmax + tol and ymin - tol <= x[1] <= ymax + tol

    def obstacles_at(self, t: int) -> list[ConvexPolygon]:
        """Inflated static and moving obstacles at sample ``t``."""
        r = self.margin
        out = [inflate(p, r) for p in self.static_obstacles]
        out += [inflate(obstacle_at(o, t, self.dt), r) for o in self.moving_obstacles]
        return out

    def obstacle_contains(self, x, t: int, tol: float = 0.0) -> bool:
        return any(p.contains(x, tol) for p in self.obstacles_at(t))

    def specification(self, name: str | None = None) -> str:
        """Formula text for a named specification, the default one, or ``name``
        itself when it is not a known name (treated as formula text)."""
        if name is None:
            name = self.spec
        return self.specs.get(name, name)


def label(x, t: int, s: Scenario) -> set[str]:
    """Atoms true at position ``x`` and sample ``t``.

    Membership is closed with half the indicator band as tolerance, so
    labels agree with any solution of the halfspace indicator constraints.
    """
    tol = s.eps / 2
    out = {name for name, reg in s.regions.items() if reg.contains(x, tol)}
    if s.obstacle_contains(x, t, tol):
        out.add(OBSTACLE_ATOM)
    return out


def label_trace(positions, s: Scenario) -> list[set[str]]:
    return [label(p, t, s) for t, p in enumerate(positions)]


# ---------------------------------------------------------------------------
# Scenario files

_POINT = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_POLY = {"type": "array", "items": _POINT, "minItems": 3}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["workspace", "vehicle", "x0", "dt"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "workspace": {
            "type": "object",
            "required": ["xmin", "ymin", "xmax", "ymax"],
            "additionalProperties": False,
            "properties": {k: {"type": "number"} for k in ("xmin", "ymin", "xmax", "ymax")},
        },
        "regions": {
            "type": "object",
            "additionalProperties": {"type": "array", "items": _POLY, "minItems": 1},
        },
        "static_obstacles": {"type": "array", "items": _POLY},
        "moving_obstacles": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["shape", "keyframes"],
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string"},
                    "shape": _POLY,
                    "keyframes": {
                        "type": "array",
                        "minItems": 1,
                        "items": {
                            "type": "array",
                            "prefixItems": [{"type": "number", "minimum": 0}, _POINT],
                            "minItems": 2,
                            "maxItems": 2,
                        },
                    },
                    "hold_last": {"type": "boolean"},
                },
            },
        },
        "vehicle": {
            "type": "object",
            "required": ["model"],
            "properties": {"model": {"enum": ["quadrotor", "car", "grid"]}},
        },
        "x0": {"type": "array", "items": {"type": "number"}, "minItems": 2},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "N": {"type": "integer", "minimum": 1},
        "spec": {"type": "string"},
        "specs": {"type": "object", "additionalProperties": {"type": "string"}},
        "inflation": {"type": ["number", "null"], "minimum": 0},
        "loop": {"type": "boolean"},
        "solver": {"type": "object"},
    },
}


def _schema_path(err: jsonschema.ValidationError) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def scenario_from_dict(doc: dict) -> Scenario:
    """Validate ``doc`` against :data:`SCENARIO_SCHEMA` and build a Scenario."""
    validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ScenarioError(err.message, _schema_path(err))

    def poly(vs, path):
        try:
            return ConvexPolygon(vs)
        except ValueError as exc:
            raise ScenarioError(str(exc), path) from None

    ws = doc["workspace"]
    regions = {}
    for name, polys in doc.get("regions", {}).items():
        if name == OBSTACLE_ATOM:
            raise ScenarioError(f"region name {OBSTACLE_ATOM!r} is reserved for obstacles", f"regions/{name}")
        regions[name] = Region(name, tuple(poly(p, f"regions/{name}/{i}") for i, p in enumerate(polys)))
    static = [poly(p, f"static_obstacles/{i}") for i, p in enumerate(doc.get("static_obstacles", []))]
    moving = []
    for i, m in enumerate(doc.get("moving_obstacles", [])):
        try:
            moving.append(
                MovingObstacle(
                    poly(m["shape"], f"moving_obstacles/{i}/shape"),
                    tuple((float(t), tuple(d)) for t, d in m["keyframes"]),
                    bool(m.get("hold_last", False)),
                    m.get("name", f"M{i}"),
                )
            )
        except ValueError as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(str(exc), f"moving_obstacles/{i}/keyframes") from None
    return Scenario(
        bounds=(ws["xmin"], ws["ymin"], ws["xmax"], ws["ymax"]),
        regions=regions,
        static_obstacles=static,
        moving_obstacles=moving,
        vehicle=dict(doc["vehicle"]),
        x0=tuple(float(v) for v in doc["x0"]),
        dt=float(doc["dt"]),
        specs=dict(doc.get("specs", {})),
        spec=doc.get("spec", "true"),
        N=doc.get("N"),
        inflation=doc.get("inflation"),
        loop=bool(doc.get("loop", False)),
        name=doc.get("name", ""),
        solver=dict(doc.get("solver", {})),
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc}") from None
    return scenario_from_dict(doc)


def bundled_scenario(name: str) -> Scenario:
    """Load one of the scenarios shipped with the package (``workspace1`` ...)."""
    from importlib import resources

    ref = resources.files("mtlplan") / "scenarios" / f"{name}.json"
    return scenario_from_dict(json.loads(ref.read_text()))
