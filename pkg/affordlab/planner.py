"""
Tree search over placement sequences

A predictor answers "what happens if this object is released here" for a
compound state. The search expands every remaining action, prunes branches
whose predicted collapse probability reaches the cutoff, scores complete
sequences for the task and returns the best one. Plans are then replayed in
the simulator and compared with the brute-force optimum.
"""

import heapq
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, NamedTuple, Optional, Protocol, Sequence, Tuple, Union

import numpy as np

from .effects import effect_row
from .encoder import FeatureBank
from .errors import AffordLabError
from .geometry import ObjectSpec, Orientation, Pose
from .mogan import predict_candidate
from .simulator import LINEAR_SLOT, SLOT_X, CompoundState, Placement, SimulationMode, place

logger = logging.getLogger(__name__)

DEFAULT_BUDGET = 20000
COLLAPSE_CUTOFF = 0.5

#: Minimum |e2| for a lateral component to count toward enclosure, dm.
ENCLOSURE_THRESHOLD = 0.05

#: Largest inventory the planner and the brute-force verifier accept.
MAX_INVENTORY = 8

SCORE_TOLERANCE = 1e-6

#: Trees larger than this are verified against a budgeted oracle search.
VERIFY_BUDGET = 200000


class NoFeasiblePlan(AffordLabError):
    pass


class TaskKind(Enum):
    TALLEST = "tallest"
    SHORTEST = "shortest"
    OCCLUDED = "occluded"
    OCCLUDING = "occluding"
    SPECIFIC_HEIGHT = "height"
    PAIR_CONSTRAINT = "pair"
    BRIDGE = "bridge"


class Objective(Enum):
    MINIMIZE = "min"
    MAXIMIZE = "max"


@dataclass(frozen=True)
class Task:
    kind: TaskKind
    mode: SimulationMode = SimulationMode.LINEAR
    target_dm: Optional[float] = None
    pair: Optional[Tuple[int, int]] = None
    objective: Objective = Objective.MAXIMIZE

    def __post_init__(self):
        if self.kind is TaskKind.SPECIFIC_HEIGHT and not (self.target_dm and self.target_dm > 0):
            raise ValueError("Specific height tasks need a positive target in decimeters")
        if self.kind is TaskKind.PAIR_CONSTRAINT:
            if not self.pair or self.pair[0] == self.pair[1]:
                raise ValueError("Pair constraint tasks need two distinct object ids")
        if self.kind is TaskKind.BRIDGE and self.mode is not SimulationMode.NONLINEAR:
            raise ValueError("Bridge tasks need nonlinear mode")

    @property
    def goal_shape(self) -> Optional[str]:
        return 'bridge' if self.kind is TaskKind.BRIDGE else None

    @classmethod
    def parse(cls, text: str, mode: Union[SimulationMode, str] = SimulationMode.LINEAR) -> "Task":
        """Parse ``tallest``, ``height:1.5``, ``pair:7,8:min``, ``bridge`` and friends"""
        mode = SimulationMode.parse(mode)
        parts = text.strip().lower().split(':')
        try:
            kind = TaskKind(parts[0])
        except ValueError:
            raise ValueError(f"Unknown task '{text}'. Available: {[k.value for k in TaskKind]}")
        if kind is TaskKind.SPECIFIC_HEIGHT:
            if len(parts) != 2:
                raise ValueError("Expected height:<decimeters>")
            return cls(kind, mode, target_dm=float(parts[1]))
        if kind is TaskKind.PAIR_CONSTRAINT:
            if len(parts) not in (2, 3):
                raise ValueError("Expected pair:<id>,<id>[:min|max]")
            a, b = (int(v) for v in parts[1].split(','))
            objective = Objective(parts[2]) if len(parts) == 3 else Objective.MAXIMIZE
            return cls(kind, mode, pair=(a, b), objective=objective)
        if kind is TaskKind.BRIDGE:
            mode = SimulationMode.NONLINEAR
        return cls(kind, mode)

    def key(self) -> str:
        if self.kind is TaskKind.SPECIFIC_HEIGHT:
            return f"{self.kind.value}:{self.target_dm:g}"
        if self.kind is TaskKind.PAIR_CONSTRAINT:
            return f"{self.kind.value}:{self.pair[0]},{self.pair[1]}:{self.objective.value}"
        return self.kind.value


class Action(NamedTuple):
    object_id: int
    slot: int
    orientation: Orientation

    def sort_key(self) -> Tuple[int, int, int]:
        return (self.object_id, self.slot, self.orientation.flag)

    def to_dict(self) -> Dict[str, Union[int, str]]:
        return {'object_id': self.object_id, 'slot': self.slot, 'orientation': self.orientation.value}


@dataclass(frozen=True, eq=False)
class CandidatePrediction:
    e1: np.ndarray
    e2: np.ndarray
    e3: float
    height_dm: float
    next_state: CompoundState


@dataclass(frozen=True, eq=False)
class StepPrediction:
    action: Action
    e1: np.ndarray
    e2: np.ndarray
    e3: float


@dataclass(eq=False)
class PlanNode:
    actions: Tuple[Action, ...]
    remaining: Tuple[ObjectSpec, ...]
    state: CompoundState
    height_dm: float = 0.0
    ledger: Tuple[StepPrediction, ...] = ()
    pruned: bool = False
    score: float = 0.0

    @property
    def complete(self) -> bool:
        return not self.remaining

    def sort_key(self) -> Tuple[Tuple[int, int, int], ...]:
        return tuple(a.sort_key() for a in self.actions)


@dataclass
class VerificationReport:
    success: bool
    reason: str
    true_metric: Optional[float] = None
    optimum: Optional[float] = None
    true_height_dm: Optional[float] = None

    def to_dict(self) -> Dict[str, object]:
        return {'success': self.success, 'reason': self.reason,
                'true_metric': None if self.true_metric is None else round(self.true_metric, 6),
                'optimum': None if self.optimum is None else round(self.optimum, 6),
                'true_height_dm': None if self.true_height_dm is None else round(self.true_height_dm, 6)}


@dataclass
class Plan:
    actions: Tuple[Action, ...]
    predicted_score: float
    predicted_height_dm: float
    inventory: Tuple[ObjectSpec, ...] = ()
    strategy: str = "exhaustive"
    verified: Optional[VerificationReport] = None

    def to_dict(self) -> Dict[str, object]:
        return {
            'actions': [a.to_dict() for a in self.actions],
            'inventory': [s.id for s in self.inventory],
            'predicted_score': round(self.predicted_score, 6),
            'predicted_height_dm': round(self.predicted_height_dm, 6),
            'strategy': self.strategy,
            'verified': self.verified.to_dict() if self.verified else None,
        }


# ---------------------------------------------------------------------------
# Predictors
# ---------------------------------------------------------------------------

class Predictor(Protocol):
    def predict(self, state: CompoundState, spec: ObjectSpec, slot: int,
                orientation: Orientation) -> CandidatePrediction:
        ...


class OraclePredictor:
    """The simulator and the effects oracle used as a perfect model"""

    def predict(self, state: CompoundState, spec: ObjectSpec, slot: int,
                orientation: Orientation) -> CandidatePrediction:
        after, _ = place(state, spec, slot, orientation)
        effects = effect_row(state, after.placements[-1], after)
        return CandidatePrediction(effects.e1, effects.e2, float(effects.e3),
                                   after.height() * 10.0, after)


class LearnedPredictor:
    """Wraps a trained effect model (graph model or baseline).

    The next state places the object at the height decoded from the
    predicted E1 top component against the current top member.
    """

    def __init__(self, model, bank: FeatureBank, catalog: str):
        self.model = model
        self.bank = bank
        self.catalog = catalog

    def predict(self, state: CompoundState, spec: ObjectSpec, slot: int,
                orientation: Orientation) -> CandidatePrediction:
        e1, e2, e3 = predict_candidate(self.model, state, self.bank, self.catalog, spec, slot, orientation)
        top = state.top_member()
        if top is None:
            new_top = spec.height
        else:
            index = state.placements.index(top)
            delta = abs(float(e1[index, 0])) / 10.0
            q_top = top.aabb.z_max
            new_top = q_top + delta if e1[index, 0] >= 0 else q_top - delta
        z = max(0.0, new_top - spec.height)
        x = state.slot_x(slot)
        placement = Placement(spec, Pose(x, state.origin[1], z, orientation), len(state.placements) + 1,
                              slot, x, state.origin[1])
        height_dm = max(state.height(), z + spec.height) * 10.0
        return CandidatePrediction(np.asarray(e1), np.asarray(e2), float(e3), height_dm,
                                   state.with_placement(placement))


# ---------------------------------------------------------------------------
# Search
# ---------------------------------------------------------------------------

def _widest(inventory: Sequence[ObjectSpec]) -> ObjectSpec:
    return max(inventory, key=lambda s: (s.outer_width, s.id))


def candidate_actions(node: PlanNode, task: Task, inventory: Sequence[ObjectSpec] = ()) -> List[Tuple[ObjectSpec, Action]]:
    """Actions available from ``node`` in lexicographic order"""
    actions = []
    deck = _widest(inventory) if task.kind is TaskKind.BRIDGE and inventory else None
    for spec in node.remaining:
        if task.mode is SimulationMode.LINEAR:
            slots, orientations = [LINEAR_SLOT], [Orientation.UPRIGHT]
        else:
            slots = list(range(len(SLOT_X)))
            orientations = [Orientation.UPRIGHT] if spec.orientation_symmetric else list(Orientation)
        if deck is not None:
            if spec is deck:
                if len(node.remaining) > 1:
                    continue
                slots = [LINEAR_SLOT]
            else:
                slots = [0, len(SLOT_X) - 1]
        for slot in slots:
            for orientation in orientations:
                actions.append((spec, Action(spec.id, slot, orientation)))
    actions.sort(key=lambda pair: pair[1].sort_key())
    return actions


def score(node: PlanNode, task: Task) -> float:
    """Task objective of a (partial) plan; larger is better"""
    kind = task.kind
    if kind is TaskKind.TALLEST:
        return node.height_dm
    if kind is TaskKind.SHORTEST:
        return -node.height_dm
    if kind is TaskKind.SPECIFIC_HEIGHT:
        return -abs(node.height_dm - task.target_dm)
    if kind in (TaskKind.OCCLUDED, TaskKind.OCCLUDING):
        count = 0
        for step in node.ledger:
            e2 = np.asarray(step.e2).reshape(-1, 4)
            if kind is TaskKind.OCCLUDING:
                count += int(np.sum(np.all(e2 >= ENCLOSURE_THRESHOLD, axis=1)))
            else:
                count += int(np.sum(np.all(e2 <= -ENCLOSURE_THRESHOLD, axis=1)))
        return float(count)
    if kind is TaskKind.PAIR_CONSTRAINT:
        order = [a.object_id for a in node.actions]
        a, b = task.pair
        if a not in order or b not in order:
            return 0.0
        first, second = sorted((order.index(a), order.index(b)))
        value = abs(float(np.asarray(node.ledger[second].e1).reshape(-1, 2)[first, 0]))
        return value if task.objective is Objective.MAXIMIZE else -value
    # bridge: prefer the sequence least likely to collapse
    return -max((step.e3 for step in node.ledger), default=0.0)


def _child(node: PlanNode, spec: ObjectSpec, action: Action, prediction: CandidatePrediction,
           task: Task, cutoff: float) -> PlanNode:
    child = PlanNode(
        actions=node.actions + (action,),
        remaining=tuple(s for s in node.remaining if s is not spec),
        state=prediction.next_state,
        height_dm=prediction.height_dm,
        ledger=node.ledger + (StepPrediction(action, prediction.e1, prediction.e2, prediction.e3),),
        pruned=prediction.e3 >= cutoff,
    )
    child.score = score(child, task)
    return child


def expand(node: PlanNode, predictor: Predictor, task: Task, cutoff: float = COLLAPSE_CUTOFF,
           inventory: Sequence[ObjectSpec] = (), executor: Optional[ThreadPoolExecutor] = None) -> List[PlanNode]:
    """One child per available action; collapse-predicted children come back pruned"""
    if node.pruned:
        return []
    actions = candidate_actions(node, task, inventory)

    def evaluate(pair):
        spec, action = pair
        return predictor.predict(node.state, spec, action.slot, action.orientation)

    if executor is not None:
        predictions = list(executor.map(evaluate, actions))
    else:
        predictions = [evaluate(pair) for pair in actions]
    return [_child(node, spec, action, prediction, task, cutoff)
            for (spec, action), prediction in zip(actions, predictions)]


def tree_size(n: int, actions_per_object: int) -> int:
    return sum(math.perm(n, d) * actions_per_object ** d for d in range(1, n + 1))


def _better(candidate: PlanNode, best: Optional[PlanNode]) -> bool:
    if best is None:
        return True
    if candidate.score > best.score + SCORE_TOLERANCE:
        return True
    if candidate.score < best.score - SCORE_TOLERANCE:
        return False
    return candidate.sort_key() < best.sort_key()


def search(inventory: Sequence[ObjectSpec], task: Task, predictor: Predictor,
           budget: int = DEFAULT_BUDGET, cutoff: float = COLLAPSE_CUTOFF, workers: int = 1) -> Plan:
    """Best complete placement sequence for ``task``.

    Small trees are enumerated exhaustively; larger ones are explored
    best-first on partial scores until ``budget`` nodes have been expanded.
    """
    if not inventory:
        raise ValueError("Inventory is empty")
    if len(inventory) > MAX_INVENTORY:
        raise ValueError(f"Inventory of {len(inventory)} objects exceeds {MAX_INVENTORY}")
    inventory = tuple(sorted(inventory, key=lambda s: s.id))
    per_object = 1 if task.mode is SimulationMode.LINEAR else 2 * len(SLOT_X)
    exhaustive = tree_size(len(inventory), per_object) <= budget
    strategy = "exhaustive" if exhaustive else "best-first"
    logger.debug("Searching %d objects for %s (%s)", len(inventory), task.key(), strategy)

    root = PlanNode((), inventory, CompoundState())
    best: Optional[PlanNode] = None
    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        if exhaustive:
            stack = [root]
            while stack:
                node = stack.pop()
                for child in reversed(expand(node, predictor, task, cutoff, inventory, executor)):
                    if child.pruned:
                        continue
                    if child.complete:
                        if _better(child, best):
                            best = child
                    else:
                        stack.append(child)
        else:
            counter = itertools.count()
            frontier = [(-root.score, root.sort_key(), next(counter), root)]
            expanded = 0
            while frontier and expanded < budget:
                _, _, _, node = heapq.heappop(frontier)
                expanded += 1
                for child in expand(node, predictor, task, cutoff, inventory, executor):
                    if child.pruned:
                        continue
                    if child.complete:
                        if _better(child, best):
                            best = child
                    else:
                        heapq.heappush(frontier, (-child.score, child.sort_key(), next(counter), child))
    finally:
        if executor is not None:
            executor.shutdown()

    if best is None:
        logger.info("No feasible plan for %s over %s", task.key(), [s.id for s in inventory])
        raise NoFeasiblePlan(f"Every branch collapses for inventory {[s.id for s in inventory]}")
    return Plan(best.actions, best.score, best.height_dm, inventory, strategy)


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------

# keyed on full object geometry; ids repeat across catalogs
_OPTIMUM_CACHE: Dict[Tuple[Tuple[ObjectSpec, ...], str, str], Optional[float]] = {}


def simulate_plan(plan: Plan, task: Task) -> PlanNode:
    """Replay ``plan`` through the oracle; the returned node may be pruned"""
    by_id = {s.id: s for s in plan.inventory}
    oracle = OraclePredictor()
    node = PlanNode((), tuple(plan.inventory), CompoundState())
    for action in plan.actions:
        spec = by_id[action.object_id]
        prediction = oracle.predict(node.state, spec, action.slot, action.orientation)
        node = _child(node, spec, action, prediction, task, COLLAPSE_CUTOFF)
        if node.pruned:
            break
    return node


def brute_force_optimum(inventory: Sequence[ObjectSpec], task: Task) -> Optional[float]:
    """Best true score over every sequence, or None when nothing stays up"""
    key = (tuple(sorted(inventory, key=lambda s: s.id)), task.key(), task.mode.value)
    if key not in _OPTIMUM_CACHE:
        try:
            plan = search(inventory, task, OraclePredictor(), budget=VERIFY_BUDGET)
            _OPTIMUM_CACHE[key] = plan.predicted_score
        except NoFeasiblePlan:
            _OPTIMUM_CACHE[key] = None
    return _OPTIMUM_CACHE[key]


def _bridge_spans(node: PlanNode, inventory: Sequence[ObjectSpec]) -> bool:
    deck_id = _widest(inventory).id
    deck = next((p for p in node.state.placements if p.spec.id == deck_id), None)
    if deck is None:
        return False
    columns = set()
    for step in deck.supports:
        columns.add(node.state.placement(step).slot)
    return {0, len(SLOT_X) - 1} <= columns


def execute_and_verify(plan: Plan, task: Task) -> VerificationReport:
    """Run the plan in the simulator and compare with the task optimum"""
    if not plan.actions:
        raise ValueError("Cannot verify an empty plan")
    node = simulate_plan(plan, task)
    height = node.state.height() * 10.0
    if node.pruned:
        report = VerificationReport(False, "CollapseDuringExecution", true_height_dm=height)
    elif task.kind is TaskKind.BRIDGE:
        spans = _bridge_spans(node, plan.inventory)
        report = VerificationReport(spans, "Success" if spans else "Suboptimal", node.score,
                                    true_height_dm=height)
    else:
        optimum = brute_force_optimum(plan.inventory, task)
        ok = optimum is not None and node.score >= optimum - SCORE_TOLERANCE
        report = VerificationReport(ok, "Success" if ok else "Suboptimal", node.score, optimum, height)
    plan.verified = report
    return report


def sample_inventories(catalog: Sequence[ObjectSpec], size: int, samples: int, seed: int = 42,
                       task: Optional[Task] = None, solvable_only: bool = False,
                       max_draws: int = 50) -> List[Tuple[ObjectSpec, ...]]:
    """Seeded random inventories; pair tasks keep both ids, bridge tasks keep the deck.

    With ``solvable_only`` a draw is kept only when some sequence of it stays
    up under ``task`` (tallest tower by default); at most ``max_draws`` draws
    per requested inventory are tried.
    """
    rng = np.random.default_rng(seed + size)
    required: List[ObjectSpec] = []
    if task is not None and task.kind is TaskKind.PAIR_CONSTRAINT:
        required = [s for s in catalog if s.id in task.pair]
    elif task is not None and task.kind is TaskKind.BRIDGE:
        required = [_widest(catalog)]
    pool = [s for s in catalog if s not in required]
    if size < len(required) or size - len(required) > len(pool):
        raise ValueError(f"Cannot draw {size} objects from a catalog of {len(catalog)}")
    check = task or Task(TaskKind.TALLEST)
    out = []
    draws = 0
    while len(out) < samples:
        if draws >= max_draws * samples:
            raise ValueError(f"Only {len(out)} of {samples} solvable inventories of size {size} "
                             f"after {draws} draws")
        draws += 1
        picked = rng.choice(len(pool), size=size - len(required), replace=False)
        chosen = tuple(sorted(required + [pool[int(i)] for i in picked], key=lambda s: s.id))
        if solvable_only and brute_force_optimum(chosen, check) is None:
            logger.debug("Redrawing unsolvable inventory %s", [s.id for s in chosen])
            continue
        out.append(chosen)
    return out
