"""
Deterministic settle model for objects released onto a compound

A released object drops straight down over its slot. Its footprint is
sampled on a regular grid; in every sampled column the object stops at the
highest solid of the scene below it, so the resting height is the maximum over
columns of (scene top - object bottom offset). Columns where the object has no
solid (ring holes) let shafts and smaller objects pass through, and columns
where the object is hollow from below (inverted cups) cover what is under
them. The contact set found this way then goes through the stability cascade:
point contacts topple, a planar patch must hold the center of mass after a
1 cm erosion, and contact rings with at least three contact directions rest on
rims. Finally every object carrying the new one is checked for an overhanging
load, which collapses the part of the compound above it.
"""

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from .errors import AffordLabError
from .geometry import (
    Aabb, ObjectKind, ObjectSpec, Orientation, Pose, bounding_box,
    column_profile, solid_volume,
)

logger = logging.getLogger(__name__)

#: Release x coordinates of the three slots, meters.
SLOT_X = (-0.12, 0.0, 0.12)

#: Slot used by every placement in linear mode.
LINEAR_SLOT = 1

#: Release clearance above the current support top, meters.
RELEASE_CLEARANCE = 0.15

#: Distance a toppled object travels, meters.
TOPPLE_DISTANCE = 0.30

#: Collapse thresholds: lateral displacement (m) and tilt (degrees).
COLLAPSE_DISTANCE = 0.20
COLLAPSE_ANGLE_DEG = 60.0

#: Support patches are shrunk by this margin before the center-of-mass test.
SUPPORT_EROSION = 0.01

#: Columns within this gap of the resting height count as contacts.
CONTACT_TOLERANCE = 1e-3

#: Footprint sampling pitch, meters.
SAMPLE_SPACING = 0.0025

Rect = Tuple[float, float, float, float]


class PlacementOnCollapsed(AffordLabError):
    """Raised when placing onto a compound that has already collapsed"""
    pass


class SimulationMode(Enum):
    LINEAR = "linear"
    NONLINEAR = "nonlinear"

    @classmethod
    def parse(cls, value: Union[str, "SimulationMode"]) -> "SimulationMode":
        if isinstance(value, SimulationMode):
            return value
        return cls(value.lower())


class SettleKind(Enum):
    STACKED_ON_TOP = "StackedOnTop"
    INSERTED_IN_CAVITY = "InsertedInCavity"
    PASSED_OVER_POLE = "PassedOverPole"
    RESTS_ON_RIM = "RestsOnRim"
    TOPPLED_OFF = "ToppledOff"
    COMPOUND_COLLAPSED = "CompoundCollapsed"

    @property
    def is_failure(self) -> bool:
        return self in (SettleKind.TOPPLED_OFF, SettleKind.COMPOUND_COLLAPSED)


@dataclass(frozen=True)
class Placement:
    """A settled object.

    ``supports`` lists the steps of the objects it rests on (empty for the
    table) and ``contact_rect`` the x-y bounds of its contact patch.
    """
    spec: ObjectSpec
    pose: Pose
    step: int
    slot: int
    release_x: float = 0.0
    release_y: float = 0.0
    tilt_deg: float = 0.0
    supports: Tuple[int, ...] = ()
    contact_rect: Optional[Rect] = None
    outcome: SettleKind = SettleKind.STACKED_ON_TOP

    @property
    def aabb(self) -> Aabb:
        return bounding_box(self.spec, self.pose)

    @property
    def displacement(self) -> float:
        return math.hypot(self.pose.x - self.release_x, self.pose.y - self.release_y)


@dataclass(frozen=True)
class SettleOutcome:
    kind: SettleKind
    final_pose: Pose


@dataclass(frozen=True)
class CompoundState:
    """Ordered placements on the table.

    ``origin`` is the x-y position of the compound frame; slots are measured
    from it.
    """
    placements: Tuple[Placement, ...] = ()
    collapsed: bool = False
    origin: Tuple[float, float] = (0.0, 0.0)

    def __len__(self) -> int:
        return len(self.placements)

    @property
    def base_pose(self) -> Optional[Pose]:
        return self.placements[0].pose if self.placements else None

    def placement(self, step: int) -> Placement:
        for p in self.placements:
            if p.step == step:
                return p
        raise KeyError(f"No placement with step {step}")

    def slot_x(self, slot: int) -> float:
        return self.origin[0] + SLOT_X[slot]

    def with_placement(self, placement: Placement) -> "CompoundState":
        return replace(self, placements=self.placements + (placement,))

    def top_member(self) -> Optional[Placement]:
        """Member with the highest top surface; the latest wins ties"""
        best = None
        for p in self.placements:
            if best is None or p.aabb.z_max >= best.aabb.z_max - 1e-12:
                best = p
        return best

    def height(self) -> float:
        return max((p.aabb.z_max for p in self.placements), default=0.0)


# ---------------------------------------------------------------------------
# Scene sampling helpers
# ---------------------------------------------------------------------------

def _footprint_grid(spec: ObjectSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Odd-sized grid over the footprint so the axis is always sampled"""
    def axis(extent: float) -> np.ndarray:
        n = max(3, int(math.ceil(extent / SAMPLE_SPACING)))
        n += 1 if n % 2 == 0 else 0
        return np.linspace(-extent / 2, extent / 2, n)
    ax = axis(spec.outer_width)
    ay = axis(spec.outer_depth)
    gx, gy = np.meshgrid(ax, ay, indexing='ij')
    return gx.ravel(), gy.ravel()


def _member_tops(compound: CompoundState, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """(members, samples) array of world top heights, -inf where empty"""
    tops = np.full((len(compound.placements), len(xs)), -np.inf)
    for i, p in enumerate(compound.placements):
        _, top = column_profile(p.spec, p.pose.orientation, xs - p.pose.x, ys - p.pose.y)
        tops[i] = np.where(np.isnan(top), -np.inf, top + p.pose.z)
    return tops


def _eroded_contains(rect: Rect, x: float, y: float, margin: float = SUPPORT_EROSION) -> bool:
    """Center-of-mass test against a patch shrunk by ``margin`` per side.

    Patches narrower than twice the margin along an axis are tested unshrunk
    on that axis.
    """
    x0, x1, y0, y1 = rect
    if x1 - x0 > 2 * margin:
        x0, x1 = x0 + margin, x1 - margin
    if y1 - y0 > 2 * margin:
        y0, y1 = y0 + margin, y1 - margin
    return x0 - 1e-9 <= x <= x1 + 1e-9 and y0 - 1e-9 <= y <= y1 + 1e-9


def _contact_directions(dx: np.ndarray, dy: np.ndarray) -> int:
    return int(np.any(dx > 1e-6)) + int(np.any(dx < -1e-6)) + int(np.any(dy > 1e-6)) + int(np.any(dy < -1e-6))


def _is_point_contact(spec: ObjectSpec, support: Placement, xs: np.ndarray, ys: np.ndarray) -> bool:
    if support.spec.kind is ObjectKind.BALL:
        return True
    if spec.kind is ObjectKind.BALL and support.spec.kind is ObjectKind.POLE:
        # a ball only ever touches the pole on the shaft tip
        rho = np.hypot(xs - support.pose.x, ys - support.pose.y)
        return bool(np.all(rho <= support.spec.hole_radius + 1e-9))
    return False


def _topple_direction(spec: ObjectSpec, step: int) -> float:
    return ((spec.id * 7 + step * 3) % 8) * math.pi / 4


def _load_set(by_step: Dict[int, Placement], root: int) -> Set[int]:
    """Objects whose weight ends up entirely on ``root``"""
    load = {root}
    for step in sorted(by_step):
        p = by_step[step]
        if step > root and p.supports and all(s in load for s in p.supports):
            load.add(step)
    return load


def _overloaded_support(placements: Sequence[Placement], new: Placement) -> Optional[int]:
    """Step of the nearest object under ``new`` whose load overhangs its patch"""
    by_step = {p.step: p for p in placements}
    ancestors: Set[int] = set()
    frontier = list(new.supports)
    while frontier:
        s = frontier.pop()
        if s not in ancestors:
            ancestors.add(s)
            frontier.extend(by_step[s].supports)
    for step in sorted(ancestors, reverse=True):
        carrier = by_step[step]
        if carrier.contact_rect is None:
            continue
        load = _load_set(by_step, step)
        masses = np.array([solid_volume(by_step[s].spec) for s in sorted(load)])
        xs = np.array([by_step[s].pose.x for s in sorted(load)])
        ys = np.array([by_step[s].pose.y for s in sorted(load)])
        com_x = float(np.dot(masses, xs) / masses.sum())
        com_y = float(np.dot(masses, ys) / masses.sum())
        if not _eroded_contains(carrier.contact_rect, com_x, com_y):
            return step
    return None


def _classify(new: Placement, members: Sequence[Placement], contact_members: Sequence[Placement]) -> SettleKind:
    box = new.aabb
    if new.spec.kind is ObjectKind.RING:
        for p in members:
            if p.spec.kind is not ObjectKind.POLE or p.tilt_deg:
                continue
            offset = math.hypot(p.pose.x - new.pose.x, p.pose.y - new.pose.y)
            if offset + p.spec.hole_radius <= new.spec.hole_radius + 1e-9 and p.aabb.z_max > box.z_min + 1e-9:
                return SettleKind.PASSED_OVER_POLE
    for p in members:
        other = p.aabb
        xy_overlap = (min(box.x_max, other.x_max) - max(box.x_min, other.x_min) > 1e-6
                      and min(box.y_max, other.y_max) - max(box.y_min, other.y_min) > 1e-6)
        if xy_overlap and min(box.z_max, other.z_max) - max(box.z_min, other.z_min) > 1e-9:
            return SettleKind.INSERTED_IN_CAVITY
    for p in contact_members:
        if (p.spec.kind is ObjectKind.CUP and p.pose.orientation is Orientation.UPRIGHT
                and abs(p.aabb.z_max - box.z_min) <= CONTACT_TOLERANCE):
            return SettleKind.RESTS_ON_RIM
    return SettleKind.STACKED_ON_TOP


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def support_top(compound: CompoundState, slot: int) -> float:
    """Highest solid directly above the slot's release point (table = 0)"""
    x = np.array([compound.slot_x(slot)])
    y = np.array([compound.origin[1]])
    if not compound.placements:
        return 0.0
    return max(0.0, float(_member_tops(compound, x, y).max()))


def release_height(compound: CompoundState, slot: int) -> float:
    return support_top(compound, slot) + RELEASE_CLEARANCE


def place(compound: CompoundState, spec: ObjectSpec, slot: int,
          orientation: Union[Orientation, str] = Orientation.UPRIGHT) -> Tuple[CompoundState, SettleOutcome]:
    """Release ``spec`` over ``slot`` and settle it.

    Returns the new compound and the settle outcome; ``compound`` itself is
    never modified.
    """
    if compound.collapsed:
        raise PlacementOnCollapsed("Cannot place onto a collapsed compound")
    if slot not in range(len(SLOT_X)):
        raise ValueError(f"Slot must be one of 0..{len(SLOT_X) - 1}, got {slot}")
    orientation = Orientation.parse(orientation)
    step = len(compound.placements) + 1
    cx, cy = compound.slot_x(slot), compound.origin[1]

    lx, ly = _footprint_grid(spec)
    bottom, _ = column_profile(spec, orientation, lx, ly)
    solid = ~np.isnan(bottom)
    lx, ly, bottom = lx[solid], ly[solid], bottom[solid]
    xs, ys = cx + lx, cy + ly

    tops = _member_tops(compound, xs, ys)
    scene = np.maximum(tops.max(axis=0), 0.0) if len(tops) else np.zeros(len(xs))
    rest = scene - bottom
    z = float(rest.max())
    contact = rest >= z - CONTACT_TOLERANCE

    touching = {}
    for i, p in enumerate(compound.placements):
        mine = contact & (tops[i] - bottom >= z - CONTACT_TOLERANCE)
        if np.any(mine):
            touching[i] = mine
    contact_members = [compound.placements[i] for i in touching]
    cx_pts, cy_pts = xs[contact], ys[contact]
    rect = (float(cx_pts.min()), float(cx_pts.max()), float(cy_pts.min()), float(cy_pts.max()))

    point_contact = any(_is_point_contact(spec, compound.placements[i], xs[mine], ys[mine])
                        for i, mine in touching.items())
    stable = not point_contact and (
        _eroded_contains(rect, cx, cy)
        or (_contact_directions(cx_pts - cx, cy_pts - cy) >= 3
            and rect[0] <= cx <= rect[1] and rect[2] <= cy <= rect[3]))

    if not stable:
        angle = _topple_direction(spec, step)
        pose = Pose(cx + TOPPLE_DISTANCE * math.cos(angle), cy + TOPPLE_DISTANCE * math.sin(angle),
                    0.0, orientation)
        toppled = Placement(spec, pose, step, slot, cx, cy, tilt_deg=90.0,
                            outcome=SettleKind.TOPPLED_OFF)
        return (replace(compound.with_placement(toppled), collapsed=True),
                SettleOutcome(SettleKind.TOPPLED_OFF, pose))

    pose = Pose(cx, cy, z, orientation)
    settled = Placement(spec, pose, step, slot, cx, cy,
                        supports=tuple(p.step for p in contact_members), contact_rect=rect)
    kind = _classify(settled, compound.placements, contact_members)
    settled = replace(settled, outcome=kind)
    placements = compound.placements + (settled,)

    failing = _overloaded_support(placements, settled)
    if failing is None:
        return replace(compound, placements=placements), SettleOutcome(kind, pose)

    by_step = {p.step: p for p in placements}
    falling = _load_set(by_step, failing)
    angle = _topple_direction(spec, step)
    dx, dy = TOPPLE_DISTANCE * math.cos(angle), TOPPLE_DISTANCE * math.sin(angle)
    moved = []
    for p in placements:
        if p.step in falling:
            p = replace(p, pose=p.pose.translated(dx, dy), tilt_deg=90.0)
        moved.append(p)
    moved[-1] = replace(moved[-1], outcome=SettleKind.COMPOUND_COLLAPSED)
    logger.debug("Placement %d overloads object at step %d; %d objects fall",
                 step, failing, len(falling))
    return (replace(compound, placements=tuple(moved), collapsed=True),
            SettleOutcome(SettleKind.COMPOUND_COLLAPSED, moved[-1].pose))


def check_collapse(compound: CompoundState) -> bool:
    """True when any object moved more than 20 cm or tilted 60 degrees or more"""
    return any(p.displacement > COLLAPSE_DISTANCE or p.tilt_deg >= COLLAPSE_ANGLE_DEG
               for p in compound.placements)


def choose_action(rng: np.random.Generator, mode: SimulationMode) -> Tuple[int, Orientation]:
    if mode is SimulationMode.LINEAR:
        return LINEAR_SLOT, Orientation.UPRIGHT
    slot = int(rng.integers(len(SLOT_X)))
    orientation = Orientation.INVERTED if rng.integers(2) else Orientation.UPRIGHT
    return slot, orientation


def run_episode(seed: int, inventory: Sequence[ObjectSpec],
                mode: Union[SimulationMode, str] = SimulationMode.LINEAR,
                episode_id: Optional[int] = None, catalog: str = 'standard',
                embed_images: bool = False) -> List["InteractionRecord"]:
    """Place the inventory in a random order until collapse or exhaustion.

    Returns one record per placement; the episode is a pure function of its
    arguments.
    """
    from .effects import effect_row
    from .dataset import InteractionRecord

    mode = SimulationMode.parse(mode)
    rng = np.random.default_rng(seed)
    episode = seed if episode_id is None else episode_id
    compound = CompoundState()
    records: List[InteractionRecord] = []
    for index in rng.permutation(len(inventory)):
        spec = inventory[int(index)]
        slot, orientation = choose_action(rng, mode)
        after, outcome = place(compound, spec, slot, orientation)
        new = after.placements[-1]
        effects = effect_row(compound, new, after)
        records.append(InteractionRecord.from_settle(
            episode, compound, new, outcome, effects, mode, catalog, embed_images))
        if effects.e3:
            break
        compound = after
    return records
