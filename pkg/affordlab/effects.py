"""
Ground-truth effect encodings of a placement

E1 compares the top and bottom faces of the new object's bounding box with
those of every compound member, E2 compares lateral extents measured with
rays through the new object, and E3 flags a collapse. All magnitudes are
reported in decimeters.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import Ray, ray_intervals
from .simulator import CompoundState, Placement, check_collapse

#: Meters to decimeters.
DM_PER_M = 10.0

#: Ray origins start this far behind the new object's center.
RAY_REACH = 2.0

#: Lateral ray directions in output order: x+, x-, y+, y-.
E2_AXES = (0, 1)


@dataclass(frozen=True, eq=False)
class EffectTriple:
    """Effects of one placement against ``k`` queried members.

    ``e1`` is (k, 2) as [top, bottom], ``e2`` is (k, 4) as [x+, x-, y+, y-].
    """
    e1: np.ndarray
    e2: np.ndarray
    e3: int

    @property
    def k(self) -> int:
        return len(self.e1)

    def rows(self):
        return list(zip(self.e1, self.e2))


def sign_adjust(face_value: float, new_surface_center: Sequence[float],
                queried_surface_center: Sequence[float],
                queried_center: Sequence[float]) -> float:
    """Attach the face-center sign to a non-negative face difference.

    The value turns negative when the new face lies strictly inside the
    queried object's extent, measured from the queried face toward the
    queried center. Zero stays positive.
    """
    if face_value < 0:
        raise ValueError("face_value must be non-negative")
    v = np.asarray(new_surface_center, dtype=float) - np.asarray(queried_surface_center, dtype=float)
    c = np.asarray(queried_center, dtype=float) - np.asarray(queried_surface_center, dtype=float)
    half = float(np.linalg.norm(c))
    if face_value == 0.0 or half == 0.0:
        return float(face_value)
    depth = float(np.dot(v, c)) / half
    if 1e-12 < depth < 2 * half - 1e-9:
        return -float(face_value)
    return float(face_value)


def compute_e1(new: Placement, queried: Placement) -> np.ndarray:
    """Signed top/bottom height differences in decimeters"""
    nb, qb = new.aabb, queried.aabb
    qc = qb.center
    n_xy = nb.center[:2]
    top = sign_adjust(abs(nb.z_max - qb.z_max),
                      [n_xy[0], n_xy[1], nb.z_max], [qc[0], qc[1], qb.z_max], qc)
    bottom = sign_adjust(abs(nb.z_min - qb.z_min),
                         [n_xy[0], n_xy[1], nb.z_min], [qc[0], qc[1], qb.z_min], qc)
    return np.array([top, bottom]) * DM_PER_M


def _extent(placement: Placement, ray: Ray, axis: int):
    hits = ray_intervals(placement.spec, placement.pose, ray)
    if not hits:
        return None
    return ray.origin[axis] + hits[0][0], ray.origin[axis] + hits[-1][1]


def compute_e2(scene: CompoundState, new: Placement, queried: Placement) -> np.ndarray:
    """Signed lateral face offsets along the rays through the new object.

    Both placements are looked up in ``scene`` by step so the poses are the
    settled ones. A ray that misses either object yields exactly 0.
    """
    new = scene.placement(new.step)
    queried = scene.placement(queried.step)
    center = new.aabb.center
    out = np.zeros(4)
    for axis in E2_AXES:
        direction = np.zeros(3)
        direction[axis] = 1.0
        ray = Ray(center - RAY_REACH * direction, direction)
        n_ext = _extent(new, ray, axis)
        q_ext = _extent(queried, ray, axis)
        if n_ext is None or q_ext is None:
            continue
        q_mid = (q_ext[0] + q_ext[1]) / 2

        def point(value: float) -> np.ndarray:
            p = center.copy()
            p[axis] = value
            return p

        plus = sign_adjust(abs(n_ext[1] - q_ext[1]), point(n_ext[1]), point(q_ext[1]), point(q_mid))
        minus = sign_adjust(abs(n_ext[0] - q_ext[0]), point(n_ext[0]), point(q_ext[0]), point(q_mid))
        out[2 * axis] = plus
        out[2 * axis + 1] = minus
    return out * DM_PER_M


def compute_e3(compound_after: CompoundState) -> int:
    return int(check_collapse(compound_after))


def effect_row(compound_before: CompoundState, new: Placement,
               compound_after: Optional[CompoundState] = None) -> EffectTriple:
    """Effects of ``new`` against every member of ``compound_before``.

    Rows follow placement order. Without ``compound_after`` the new
    placement is appended to the compound as-is.
    """
    scene = compound_after if compound_after is not None else compound_before.with_placement(new)
    settled = scene.placement(new.step)
    e1 = np.zeros((len(compound_before), 2))
    e2 = np.zeros((len(compound_before), 4))
    for i, member in enumerate(compound_before.placements):
        current = scene.placement(member.step)
        e1[i] = compute_e1(settled, current)
        e2[i] = compute_e2(scene, settled, current)
    return EffectTriple(e1, e2, compute_e3(scene))
