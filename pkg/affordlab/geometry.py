"""
Object catalog, poses, bounding boxes and analytic ray casting

Every object is described by a small set of solid primitives (boxes, possibly
annular vertical cylinders and spheres) in a local frame whose origin is the
bottom-center of the object. Inverted objects mirror that profile about the
horizontal mid-plane. The same primitives drive ray casting, point membership
and the per-column solid profile used by the renderer and the settle model.
"""

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

#: Slack used when a sample point lies exactly on a region boundary.
REGION_EPS = 1e-9

#: Pole geometry shared by the catalog and the settle rules.
POLE_BASE_HEIGHT = 0.02

Interval = Tuple[float, float]


class ObjectKind(Enum):
    """Toy families"""
    POLE = "Pole"
    BALL = "Ball"
    CUBE = "Cube"
    RING = "Ring"
    CUP = "Cup"


class Orientation(Enum):
    """The two release orientations of the nonlinear action set"""
    UPRIGHT = "upright"
    INVERTED = "inverted"

    @property
    def flag(self) -> int:
        return 0 if self is Orientation.UPRIGHT else 1

    @classmethod
    def parse(cls, value: Union[str, int, "Orientation"]) -> "Orientation":
        if isinstance(value, Orientation):
            return value
        if isinstance(value, int):
            return cls.INVERTED if value else cls.UPRIGHT
        return cls(value.lower())


@dataclass(frozen=True)
class ObjectSpec:
    """Parametric description of one toy, all lengths in meters.

    For a Pole, ``hole_radius`` is the shaft radius and ``wall_thickness`` the
    base plate thickness; for a Ring it is the inner radius.
    """
    id: int
    kind: ObjectKind
    height: float
    outer_width: float
    outer_depth: float
    hole_radius: float = 0.0
    cavity_radius: float = 0.0
    cavity_depth: float = 0.0
    wall_thickness: float = 0.0
    name: str = ""

    def __post_init__(self):
        if self.height <= 0 or self.outer_width <= 0 or self.outer_depth <= 0:
            raise ValueError(f"Object {self.id}: dimensions must be positive")
        if self.hole_radius >= self.outer_width / 2:
            raise ValueError(f"Object {self.id}: hole_radius must be below half the width")
        if self.cavity_radius >= self.outer_width / 2:
            raise ValueError(f"Object {self.id}: cavity_radius must be below half the width")
        if self.cavity_depth >= self.height:
            raise ValueError(f"Object {self.id}: cavity_depth must be below the height")
        if self.kind is ObjectKind.CUP and not math.isclose(
                self.cavity_depth, self.height - self.wall_thickness, abs_tol=1e-12):
            raise ValueError(f"Object {self.id}: cup cavity_depth must equal height - wall_thickness")

    @property
    def radius(self) -> float:
        return self.outer_width / 2

    @property
    def orientation_symmetric(self) -> bool:
        """True when Upright and Inverted describe the same solid"""
        return self.kind in (ObjectKind.BALL, ObjectKind.CUBE, ObjectKind.RING)

    def to_dict(self) -> Dict[str, Union[int, float, str]]:
        return {
            'id': self.id,
            'name': self.name,
            'kind': self.kind.value,
            'height': round(self.height, 6),
            'outer_width': round(self.outer_width, 6),
            'outer_depth': round(self.outer_depth, 6),
            'hole_radius': round(self.hole_radius, 6),
            'cavity_radius': round(self.cavity_radius, 6),
            'cavity_depth': round(self.cavity_depth, 6),
            'wall_thickness': round(self.wall_thickness, 6),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Union[int, float, str]]) -> "ObjectSpec":
        return cls(
            id=int(data['id']),
            kind=ObjectKind(data['kind']),
            height=float(data['height']),
            outer_width=float(data['outer_width']),
            outer_depth=float(data['outer_depth']),
            hole_radius=float(data.get('hole_radius', 0.0)),
            cavity_radius=float(data.get('cavity_radius', 0.0)),
            cavity_depth=float(data.get('cavity_depth', 0.0)),
            wall_thickness=float(data.get('wall_thickness', 0.0)),
            name=str(data.get('name', '')),
        )


@dataclass(frozen=True)
class Pose:
    """Bottom-center position of an object plus its orientation"""
    x: float
    y: float
    z: float
    orientation: Orientation = Orientation.UPRIGHT

    def translated(self, dx: float = 0.0, dy: float = 0.0, dz: float = 0.0) -> "Pose":
        return Pose(self.x + dx, self.y + dy, self.z + dz, self.orientation)


@dataclass(frozen=True)
class Aabb:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    z_min: float
    z_max: float

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max or self.z_min > self.z_max:
            raise ValueError("Aabb bounds must satisfy min <= max on every axis")

    @property
    def center(self) -> np.ndarray:
        return np.array([(self.x_min + self.x_max) / 2,
                         (self.y_min + self.y_max) / 2,
                         (self.z_min + self.z_max) / 2])

    def intersects(self, other: "Aabb", inflate: float = 0.0) -> bool:
        """Closed-interval overlap test after growing both boxes by ``inflate``"""
        return (self.x_min - inflate <= other.x_max + inflate and other.x_min - inflate <= self.x_max + inflate
                and self.y_min - inflate <= other.y_max + inflate and other.y_min - inflate <= self.y_max + inflate
                and self.z_min - inflate <= other.z_max + inflate and other.z_min - inflate <= self.z_max + inflate)

    def contains(self, point: Sequence[float], tol: float = 1e-9) -> bool:
        x, y, z = point
        return (self.x_min - tol <= x <= self.x_max + tol
                and self.y_min - tol <= y <= self.y_max + tol
                and self.z_min - tol <= z <= self.z_max + tol)


@dataclass(frozen=True, eq=False)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=float).reshape(3)
        direction = np.asarray(self.direction, dtype=float).reshape(3)
        if abs(np.linalg.norm(direction) - 1.0) > 1e-9:
            raise ValueError("Ray direction must be a unit vector")
        object.__setattr__(self, 'origin', origin)
        object.__setattr__(self, 'direction', direction)

    @classmethod
    def towards(cls, origin: Sequence[float], direction: Sequence[float]) -> "Ray":
        """Build a ray, normalizing ``direction``"""
        d = np.asarray(direction, dtype=float)
        return cls(np.asarray(origin, dtype=float), d / np.linalg.norm(d))

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


# ---------------------------------------------------------------------------
# Catalogs
# ---------------------------------------------------------------------------

def _ring(obj_id: int, name: str, height: float, width: float, hole: float) -> ObjectSpec:
    return ObjectSpec(obj_id, ObjectKind.RING, height, width, width,
                      hole_radius=hole, wall_thickness=width / 2 - hole, name=name)


def _cup(obj_id: int, name: str, height: float, width: float, wall: float = 0.01) -> ObjectSpec:
    return ObjectSpec(obj_id, ObjectKind.CUP, height, width, width,
                      cavity_radius=width / 2 - wall, cavity_depth=height - wall,
                      wall_thickness=wall, name=name)


def catalog_standard() -> List[ObjectSpec]:
    """The toy set of the linear experiments.

    Rings are listed largest to smallest; every hole is wider than the pole
    shaft.
    """
    specs = [ObjectSpec(0, ObjectKind.POLE, 0.17, 0.14, 0.14, hole_radius=0.015,
                        wall_thickness=POLE_BASE_HEIGHT, name="pole")]
    for i in range(5):
        specs.append(ObjectSpec(1 + i, ObjectKind.BALL, 0.05, 0.05, 0.05, name=f"ball_{i + 1}"))
    specs.append(ObjectSpec(6, ObjectKind.CUBE, 0.10, 0.10, 0.10, name="cube"))
    rings = [(0.03, 0.12, 0.040), (0.025, 0.105, 0.035), (0.024, 0.097, 0.032),
             (0.02, 0.09, 0.030), (0.015, 0.08, 0.026)]
    for i, (height, width, hole) in enumerate(rings):
        specs.append(_ring(7 + i, f"ring_{i + 1}", height, width, hole))
    specs.append(_cup(12, "cup_big", 0.10, 0.105))
    specs.append(_cup(13, "cup_medium", 0.085, 0.075))
    specs.append(_cup(14, "cup_small", 0.075, 0.065))
    return specs


def catalog_nonlinear() -> List[ObjectSpec]:
    """Cubes and cups for slot/orientation experiments, plus a deck that spans
    the outer slots when both legs are level."""
    return [
        ObjectSpec(0, ObjectKind.CUBE, 0.10, 0.10, 0.10, name="cube_a"),
        ObjectSpec(1, ObjectKind.CUBE, 0.10, 0.10, 0.10, name="cube_b"),
        ObjectSpec(2, ObjectKind.CUBE, 0.05, 0.10, 0.10, name="slab"),
        _cup(3, "cup_big", 0.10, 0.105),
        _cup(4, "cup_medium", 0.085, 0.075),
        _cup(5, "cup_small", 0.075, 0.065),
        ObjectSpec(6, ObjectKind.CUBE, 0.03, 0.34, 0.10, name="deck"),
    ]


CATALOGS = {
    'standard': catalog_standard,
    'nonlinear': catalog_nonlinear,
}


def catalog_by_name(name: str) -> List[ObjectSpec]:
    try:
        return CATALOGS[name]()
    except KeyError:
        raise ValueError(f"Unknown catalog '{name}'. Available: {sorted(CATALOGS)}")


def catalog_to_json(specs: Sequence[ObjectSpec]) -> str:
    return json.dumps([spec.to_dict() for spec in specs], indent=2)


def catalog_from_json(text: str) -> List[ObjectSpec]:
    return [ObjectSpec.from_dict(item) for item in json.loads(text)]


# ---------------------------------------------------------------------------
# Primitive decomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Cylinder:
    """Vertical (possibly annular) cylinder centered on the local z axis"""
    r_out: float
    r_in: float
    z0: float
    z1: float


@dataclass(frozen=True)
class _Box:
    hx: float
    hy: float
    z0: float
    z1: float


@dataclass(frozen=True)
class _Sphere:
    r: float
    zc: float


_Primitive = Union[_Cylinder, _Box, _Sphere]


def _primitives(spec: ObjectSpec, orientation: Orientation) -> List[_Primitive]:
    h = spec.height
    inverted = orientation is Orientation.INVERTED
    if spec.kind is ObjectKind.CUBE:
        return [_Box(spec.outer_width / 2, spec.outer_depth / 2, 0.0, h)]
    if spec.kind is ObjectKind.BALL:
        return [_Sphere(spec.radius, spec.radius)]
    if spec.kind is ObjectKind.RING:
        return [_Cylinder(spec.radius, spec.hole_radius, 0.0, h)]
    if spec.kind is ObjectKind.CUP:
        t = spec.wall_thickness
        floor = _Cylinder(spec.radius, 0.0, h - t, h) if inverted else _Cylinder(spec.radius, 0.0, 0.0, t)
        return [_Cylinder(spec.radius, spec.cavity_radius, 0.0, h), floor]
    # pole
    hb = spec.wall_thickness
    base = _Cylinder(spec.radius, 0.0, h - hb, h) if inverted else _Cylinder(spec.radius, 0.0, 0.0, hb)
    return [_Cylinder(spec.hole_radius, 0.0, 0.0, h), base]


def bounding_box(spec: ObjectSpec, pose: Pose) -> Aabb:
    """Axis-aligned box of a posed object; identical for both orientations"""
    hx = spec.outer_width / 2
    hy = spec.outer_depth / 2
    return Aabb(pose.x - hx, pose.x + hx, pose.y - hy, pose.y + hy, pose.z, pose.z + spec.height)


def solid_volume(spec: ObjectSpec) -> float:
    """Solid volume in m^3, used as a mass proxy (uniform density)"""
    h = spec.height
    if spec.kind is ObjectKind.CUBE:
        return spec.outer_width * spec.outer_depth * h
    if spec.kind is ObjectKind.BALL:
        return 4.0 / 3.0 * math.pi * spec.radius ** 3
    if spec.kind is ObjectKind.RING:
        return math.pi * (spec.radius ** 2 - spec.hole_radius ** 2) * h
    if spec.kind is ObjectKind.CUP:
        t = spec.wall_thickness
        return (math.pi * (spec.radius ** 2 - spec.cavity_radius ** 2) * (h - t)
                + math.pi * spec.radius ** 2 * t)
    hb = spec.wall_thickness
    return math.pi * spec.radius ** 2 * hb + math.pi * spec.hole_radius ** 2 * (h - hb)


def _to_local(pose: Pose, points: np.ndarray) -> np.ndarray:
    """World points relative to the bottom-center; primitives already carry the orientation"""
    return np.asarray(points, dtype=float) - np.array([pose.x, pose.y, pose.z])


# ---------------------------------------------------------------------------
# Ray casting
# ---------------------------------------------------------------------------

def _radial_interval(o: np.ndarray, d: np.ndarray, r: float) -> Optional[Interval]:
    a = d[0] * d[0] + d[1] * d[1]
    c = o[0] * o[0] + o[1] * o[1] - r * r
    if a < 1e-18:
        return (-math.inf, math.inf) if c < 0 else None
    b = 2.0 * (o[0] * d[0] + o[1] * d[1])
    disc = b * b - 4.0 * a * c
    if disc <= 0.0:
        # tangency counts as a miss
        return None
    sq = math.sqrt(disc)
    return ((-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a))


def _slab(o_k: float, d_k: float, lo: float, hi: float) -> Optional[Interval]:
    if abs(d_k) < 1e-15:
        return (-math.inf, math.inf) if lo < o_k < hi else None
    t0 = (lo - o_k) / d_k
    t1 = (hi - o_k) / d_k
    return (min(t0, t1), max(t0, t1))


def _overlap(a: Optional[Interval], b: Optional[Interval]) -> Optional[Interval]:
    if a is None or b is None:
        return None
    lo, hi = max(a[0], b[0]), min(a[1], b[1])
    return (lo, hi) if lo < hi else None


def _subtract(interval: Interval, cut: Optional[Interval]) -> List[Interval]:
    if cut is None:
        return [interval]
    parts = []
    if interval[0] < cut[0]:
        parts.append((interval[0], min(interval[1], cut[0])))
    if cut[1] < interval[1]:
        parts.append((max(interval[0], cut[1]), interval[1]))
    return [p for p in parts if p[0] < p[1]]


def _primitive_intervals(prim: _Primitive, o: np.ndarray, d: np.ndarray) -> List[Interval]:
    if isinstance(prim, _Box):
        span = _overlap(_slab(o[0], d[0], -prim.hx, prim.hx), _slab(o[1], d[1], -prim.hy, prim.hy))
        span = _overlap(span, _slab(o[2], d[2], prim.z0, prim.z1))
        return [span] if span else []
    if isinstance(prim, _Sphere):
        oc = o - np.array([0.0, 0.0, prim.zc])
        b = 2.0 * float(np.dot(oc, d))
        c = float(np.dot(oc, oc)) - prim.r * prim.r
        disc = b * b - 4.0 * c
        if disc <= 0.0:
            return []
        sq = math.sqrt(disc)
        return [((-b - sq) / 2.0, (-b + sq) / 2.0)]
    span = _overlap(_radial_interval(o, d, prim.r_out), _slab(o[2], d[2], prim.z0, prim.z1))
    if span is None:
        return []
    if prim.r_in <= 0.0:
        return [span]
    return _subtract(span, _radial_interval(o, d, prim.r_in))


def _union(intervals: List[Interval]) -> List[Interval]:
    merged: List[List[float]] = []
    for lo, hi in sorted(intervals):
        if merged and lo <= merged[-1][1] + 1e-12:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return [(lo, hi) for lo, hi in merged]


def ray_intervals(spec: ObjectSpec, pose: Pose, ray: Ray) -> List[Interval]:
    """Ray-parameter intervals (on the whole line) spent inside the solid"""
    o = _to_local(pose, ray.origin)
    d = ray.direction
    found: List[Interval] = []
    for prim in _primitives(spec, pose.orientation):
        found.extend(_primitive_intervals(prim, o, d))
    return _union(found)


def ray_intersect(spec: ObjectSpec, pose: Pose, ray: Ray) -> List[np.ndarray]:
    """Entry/exit points of ``ray`` with the solid surface, sorted along the ray"""
    params: List[float] = []
    for lo, hi in ray_intervals(spec, pose, ray):
        if hi < 0.0:
            continue
        if lo >= 0.0:
            params.append(lo)
        params.append(hi)
    return [ray.at(t) for t in params]


# ---------------------------------------------------------------------------
# Implicit solid and column profiles
# ---------------------------------------------------------------------------

def contains_points(spec: ObjectSpec, pose: Pose, points: np.ndarray) -> np.ndarray:
    """Strict interior membership for an (n, 3) array of world points"""
    local = _to_local(pose, np.atleast_2d(points))
    x, y, z = local[:, 0], local[:, 1], local[:, 2]
    inside = np.zeros(len(local), dtype=bool)
    for prim in _primitives(spec, pose.orientation):
        if isinstance(prim, _Box):
            hit = (np.abs(x) < prim.hx) & (np.abs(y) < prim.hy) & (z > prim.z0) & (z < prim.z1)
        elif isinstance(prim, _Sphere):
            hit = x * x + y * y + (z - prim.zc) ** 2 < prim.r * prim.r
        else:
            rho2 = x * x + y * y
            hit = (rho2 < prim.r_out ** 2) & (z > prim.z0) & (z < prim.z1)
            if prim.r_in > 0.0:
                hit &= rho2 > prim.r_in ** 2
        inside |= hit
    return inside


def column_profile(spec: ObjectSpec, orientation: Orientation,
                   lx: np.ndarray, ly: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Lowest and highest solid height of each vertical column.

    ``lx``/``ly`` are offsets from the object axis; heights are relative to
    the object's base. Columns without solid are NaN.
    """
    lx = np.asarray(lx, dtype=float)
    ly = np.asarray(ly, dtype=float)
    bottom = np.full(lx.shape, np.inf)
    top = np.full(lx.shape, -np.inf)
    rho = np.hypot(lx, ly)
    for prim in _primitives(spec, orientation):
        if isinstance(prim, _Box):
            mask = (np.abs(lx) <= prim.hx + REGION_EPS) & (np.abs(ly) <= prim.hy + REGION_EPS)
            lo = np.full(lx.shape, prim.z0)
            hi = np.full(lx.shape, prim.z1)
        elif isinstance(prim, _Sphere):
            mask = rho <= prim.r
            s = np.sqrt(np.clip(prim.r ** 2 - rho ** 2, 0.0, None))
            lo = prim.zc - s
            hi = prim.zc + s
        else:
            mask = (rho <= prim.r_out + REGION_EPS) & (rho >= prim.r_in - REGION_EPS)
            lo = np.full(lx.shape, prim.z0)
            hi = np.full(lx.shape, prim.z1)
        bottom = np.where(mask, np.minimum(bottom, lo), bottom)
        top = np.where(mask, np.maximum(top, hi), top)
    empty = ~np.isfinite(top)
    bottom[empty] = np.nan
    top[empty] = np.nan
    return bottom, top
