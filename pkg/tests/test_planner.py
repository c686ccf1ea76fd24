#!/usr/bin/env python3
"""
Tests for task parsing, tree search and plan verification
"""

import numpy as np
import pytest

from affordlab.geometry import ObjectKind, Orientation, catalog_nonlinear, catalog_standard
from affordlab.mogan import MoganModel
from affordlab import planner
from affordlab.effects import effect_row
from affordlab.planner import (
    Action, LearnedPredictor, NoFeasiblePlan, Objective, OraclePredictor, Plan, PlanNode,
    StepPrediction, Task, TaskKind, brute_force_optimum, candidate_actions, execute_and_verify,
    sample_inventories, score, search, tree_size,
)
from affordlab.simulator import CompoundState, SimulationMode, place

UP = Orientation.UPRIGHT


def inventory(specs, *ids):
    return tuple(specs[i] for i in ids)


def ids_of(plan):
    return [a.object_id for a in plan.actions]


class TestTask:
    """Task parsing and validation"""

    def test_parse_simple_kinds(self):
        """Plain names map to task kinds"""
        assert Task.parse("tallest").kind is TaskKind.TALLEST
        assert Task.parse("Shortest").kind is TaskKind.SHORTEST
        assert Task.parse("occluding").kind is TaskKind.OCCLUDING

    def test_parse_height(self):
        """Specific height carries a target in decimeters"""
        task = Task.parse("height:1.5")
        assert task.kind is TaskKind.SPECIFIC_HEIGHT
        assert task.target_dm == 1.5
        assert task.key() == "height:1.5"

    def test_parse_pair(self):
        """Pair constraints carry two ids and an objective"""
        task = Task.parse("pair:7,8:min")
        assert task.pair == (7, 8)
        assert task.objective is Objective.MINIMIZE
        assert Task.parse("pair:7,8").objective is Objective.MAXIMIZE

    def test_bridge_forces_nonlinear(self):
        """Bridges need side-by-side placements"""
        assert Task.parse("bridge", "linear").mode is SimulationMode.NONLINEAR
        assert Task.parse("bridge").goal_shape == "bridge"
        with pytest.raises(ValueError):
            Task(TaskKind.BRIDGE, SimulationMode.LINEAR)

    def test_invalid_tasks(self):
        """Unknown names and bad parameters are rejected"""
        with pytest.raises(ValueError, match="Unknown task"):
            Task.parse("widest")
        with pytest.raises(ValueError):
            Task.parse("height:0")
        with pytest.raises(ValueError):
            Task.parse("pair:7,7")


class TestCandidates:
    """Action enumeration"""

    def test_linear_actions(self, standard):
        """One centered upright action per remaining object, by id"""
        node = PlanNode((), inventory(standard, 8, 0, 7), CompoundState())
        actions = [a for _, a in candidate_actions(node, Task.parse("tallest"))]
        assert actions == [Action(0, 1, UP), Action(7, 1, UP), Action(8, 1, UP)]

    def test_nonlinear_actions_skip_symmetric_flips(self, nonlinear):
        """Cubes get three slots, cups three slots in both orientations"""
        node = PlanNode((), inventory(nonlinear, 0, 3), CompoundState())
        actions = [a for _, a in candidate_actions(node, Task.parse("tallest", "nonlinear"))]
        assert len([a for a in actions if a.object_id == 0]) == 3
        assert len([a for a in actions if a.object_id == 3]) == 6
        assert actions == sorted(actions, key=lambda a: a.sort_key())

    def test_bridge_holds_deck_for_last(self, nonlinear):
        """The deck is only offered once it is the last object"""
        items = inventory(nonlinear, 0, 1, 6)
        task = Task.parse("bridge")
        first = [a for _, a in candidate_actions(PlanNode((), items, CompoundState()), task, items)]
        assert {a.object_id for a in first} == {0, 1}
        assert {a.slot for a in first} == {0, 2}
        last = [a for _, a in candidate_actions(PlanNode((), items[2:], CompoundState()), task, items)]
        assert last == [Action(6, 1, UP)]

    def test_tree_size(self):
        """Sum over depths of ordered selections times action choices"""
        assert tree_size(3, 1) == 3 + 6 + 6
        assert tree_size(2, 6) == 2 * 6 + 2 * 36


class TestScore:
    """Task objectives over predicted ledgers"""

    def _node(self, e2_rows, height=1.0):
        ledger = (StepPrediction(Action(7, 1, UP), np.zeros((len(e2_rows), 2)), np.array(e2_rows), 0.0),)
        return PlanNode((Action(7, 1, UP),), (), CompoundState(), height, ledger)

    def test_height_objectives(self):
        """Tallest, shortest and specific height read the predicted height"""
        node = self._node([], height=1.7)
        assert score(node, Task.parse("tallest")) == pytest.approx(1.7)
        assert score(node, Task.parse("shortest")) == pytest.approx(-1.7)
        assert score(node, Task.parse("height:2.0")) == pytest.approx(-0.3)

    def test_enclosure_counts(self):
        """Rows past the threshold on every side count once"""
        node = self._node([[0.45, 0.45, 0.45, 0.45], [0.45, 0.01, 0.45, 0.45], [-0.2, -0.2, -0.2, -0.2]])
        assert score(node, Task.parse("occluding")) == 1.0
        assert score(node, Task.parse("occluded")) == 1.0


class TestOracleSearch:
    """Search with the simulator as the predictor"""

    def test_shortest_threads_rings_over_pole(self, standard):
        """Pole first, then both rings slide down"""
        plan = search(inventory(standard, 0, 7, 8), Task.parse("shortest"), OraclePredictor())
        assert ids_of(plan) == [0, 7, 8]
        assert plan.predicted_height_dm == pytest.approx(1.7)
        assert plan.strategy == "exhaustive"

    def test_tallest_puts_pole_on_top(self, standard):
        """Rings first, the pole last"""
        plan = search(inventory(standard, 0, 7, 8), Task.parse("tallest"), OraclePredictor())
        assert ids_of(plan) == [7, 8, 0]
        assert plan.predicted_height_dm == pytest.approx(2.25)

    def test_specific_height(self, standard):
        """The smaller ring under the pole lands closest to 1.9 dm"""
        plan = search(inventory(standard, 0, 7, 8), Task.parse("height:1.9"), OraclePredictor())
        assert ids_of(plan) == [8, 0, 7]
        assert plan.predicted_height_dm == pytest.approx(1.95)

    def test_balls_cannot_stack(self, standard):
        """Every ordering of two balls collapses"""
        with pytest.raises(NoFeasiblePlan):
            search(inventory(standard, 1, 2), Task.parse("tallest"), OraclePredictor())

    def test_inventory_limits(self, standard):
        """Empty and oversized inventories are rejected"""
        with pytest.raises(ValueError):
            search((), Task.parse("tallest"), OraclePredictor())
        with pytest.raises(ValueError):
            search(tuple(catalog_standard()[:9]), Task.parse("tallest"), OraclePredictor())

    def test_search_is_deterministic(self, standard):
        """Repeated and threaded searches agree"""
        items = inventory(standard, 0, 6, 9, 12)
        task = Task.parse("tallest")
        a = search(items, task, OraclePredictor())
        b = search(items, task, OraclePredictor())
        c = search(items, task, OraclePredictor(), workers=2)
        assert a.actions == b.actions == c.actions

    def test_best_first_when_budget_is_small(self, standard):
        """Large trees fall back to a budgeted best-first search"""
        plan = search(inventory(standard, 0, 7, 8), Task.parse("tallest"), OraclePredictor(), budget=5)
        assert plan.strategy == "best-first"
        assert sorted(ids_of(plan)) == [0, 7, 8]

    def test_bridge_plan(self, nonlinear):
        """Two cubes under the outer slots, then the deck"""
        items = inventory(nonlinear, 0, 1, 6)
        plan = search(items, Task.parse("bridge"), OraclePredictor())
        assert [(a.object_id, a.slot) for a in plan.actions] == [(0, 0), (1, 2), (6, 1)]


class TestVerification:
    """Replaying plans in the simulator"""

    def test_oracle_plan_succeeds(self, standard):
        """An oracle plan matches the brute-force optimum"""
        task = Task.parse("shortest")
        plan = search(inventory(standard, 0, 7, 8), task, OraclePredictor())
        report = execute_and_verify(plan, task)
        assert report.success and report.reason == "Success"
        assert report.true_metric == pytest.approx(report.optimum)
        assert plan.verified is report

    def test_suboptimal_plan(self, standard):
        """A valid but worse order is reported as suboptimal"""
        task = Task.parse("shortest")
        plan = Plan((Action(7, 1, UP), Action(8, 1, UP), Action(0, 1, UP)), -2.25, 2.25,
                    inventory(standard, 0, 7, 8))
        report = execute_and_verify(plan, task)
        assert not report.success
        assert report.reason == "Suboptimal"
        assert report.true_height_dm == pytest.approx(2.25)

    def test_collapse_during_execution(self, standard):
        """A plan that topples fails"""
        plan = Plan((Action(1, 1, UP), Action(2, 1, UP)), 1.0, 1.0, inventory(standard, 1, 2))
        report = execute_and_verify(plan, Task.parse("tallest"))
        assert not report.success
        assert report.reason == "CollapseDuringExecution"

    def test_bridge_success(self, nonlinear):
        """The deck resting on both outer columns is a bridge"""
        task = Task.parse("bridge")
        plan = search(inventory(nonlinear, 0, 1, 6), task, OraclePredictor())
        assert execute_and_verify(plan, task).success

    def test_empty_plan_rejected(self, standard):
        """There is nothing to verify in an empty plan"""
        with pytest.raises(ValueError):
            execute_and_verify(Plan((), 0.0, 0.0, inventory(standard, 0)), Task.parse("tallest"))

    def test_plan_to_dict(self, standard):
        """Serialised plans list actions and the verification"""
        task = Task.parse("tallest")
        plan = search(inventory(standard, 0, 7), task, OraclePredictor())
        execute_and_verify(plan, task)
        data = plan.to_dict()
        assert data['inventory'] == [0, 7]
        assert data['actions'][0] == {'object_id': 7, 'slot': 1, 'orientation': 'upright'}
        assert data['verified']['success'] is True


class TestLearnedPredictor:
    """Search driven by an effect model"""

    def test_first_object_height(self, standard, linear_bank):
        """An object on an empty table stands at its own height"""
        model = MoganModel(linear_bank.feature_size, 'linear')
        prediction = LearnedPredictor(model, linear_bank, 'standard').predict(
            CompoundState(), standard[6], 1, UP)
        assert prediction.height_dm == pytest.approx(1.0)
        assert len(prediction.next_state) == 1

    def test_learned_search_returns_complete_plan(self, standard, linear_bank):
        """An untrained model still yields a full ordering or no plan"""
        model = MoganModel(linear_bank.feature_size, 'linear', seed=1)
        predictor = LearnedPredictor(model, linear_bank, 'standard')
        try:
            plan = search(inventory(standard, 0, 7, 8), Task.parse("tallest"), predictor, cutoff=1.0)
        except NoFeasiblePlan:
            pytest.fail("a cutoff of 1.0 never prunes a sigmoid output")
        assert sorted(ids_of(plan)) == [0, 7, 8]


class TestInventories:
    """Seeded random inventories"""

    def test_sizes_and_order(self):
        """Inventories have the requested size, sorted by id"""
        catalog = catalog_standard()
        for items in sample_inventories(catalog, 4, 5, seed=1):
            assert len(items) == 4
            assert [s.id for s in items] == sorted(s.id for s in items)

    def test_seeded(self):
        """Same seed, same inventories"""
        catalog = catalog_standard()
        a = sample_inventories(catalog, 3, 4, seed=2)
        b = sample_inventories(catalog, 3, 4, seed=2)
        assert [[s.id for s in i] for i in a] == [[s.id for s in i] for i in b]

    def test_pair_ids_always_present(self):
        """Pair tasks keep both objects in every inventory"""
        task = Task.parse("pair:7,8")
        for items in sample_inventories(catalog_standard(), 3, 5, task=task):
            assert {7, 8} <= {s.id for s in items}

    def test_bridge_keeps_deck(self):
        """Bridge inventories always contain the deck"""
        task = Task.parse("bridge")
        for items in sample_inventories(catalog_nonlinear(), 3, 5, task=task):
            assert 6 in {s.id for s in items}

    def test_too_large(self):
        """Cannot draw more objects than the catalog holds"""
        with pytest.raises(ValueError):
            sample_inventories(catalog_nonlinear(), 8, 1)

    def test_solvable_only_skips_unstackable_draws(self):
        """Every kept inventory has a sequence that stays up"""
        task = Task.parse("tallest")
        inventories = sample_inventories(catalog_standard(), 4, 6, seed=5, task=task, solvable_only=True)
        assert len(inventories) == 6
        assert all(brute_force_optimum(items, task) is not None for items in inventories)

    def test_solvable_only_gives_up(self):
        """Catalogs without a standing pair exhaust the draw limit"""
        balls = [s for s in catalog_standard() if s.kind is ObjectKind.BALL]
        with pytest.raises(ValueError, match="solvable"):
            sample_inventories(balls, 2, 1, solvable_only=True, max_draws=3)


class TestOptimumCache:
    """Brute-force optima are cached per object geometry"""

    def test_same_ids_from_other_catalog_are_not_shared(self, standard, nonlinear):
        """Ids 0 and 6 name different objects in the two catalogs"""
        task = Task.parse("tallest")
        first = brute_force_optimum(inventory(standard, 0, 6), task)
        second = brute_force_optimum(inventory(nonlinear, 0, 6), task)
        assert len(planner._OPTIMUM_CACHE) == 2
        assert first != second

    def test_repeated_call_hits_cache(self, standard):
        """The second lookup does not search again"""
        task = Task.parse("shortest")
        brute_force_optimum(inventory(standard, 0, 7), task)
        brute_force_optimum(inventory(standard, 7, 0), task)
        assert len(planner._OPTIMUM_CACHE) == 1


class TestPlanningSuccess:
    """Success rates over seeded solvable inventories"""

    @pytest.mark.parametrize("task_name", ["tallest", "shortest"])
    @pytest.mark.parametrize("size", [2, 3, 4, 5])
    def test_oracle_solves_every_inventory(self, task_name, size):
        """Planning with the simulator itself succeeds ten times out of ten"""
        task = Task.parse(task_name)
        inventories = sample_inventories(catalog_standard(), size, 10, seed=42, task=task, solvable_only=True)
        successes = sum(execute_and_verify(search(items, task, OraclePredictor()), task).success
                        for items in inventories)
        assert successes == 10

    @pytest.mark.parametrize("task_name", ["tallest", "shortest"])
    @pytest.mark.parametrize("size", [2, 3])
    def test_learned_path_with_exact_effects(self, task_name, size, monkeypatch):
        """Decoding next states from exact effects reproduces oracle plans"""
        def exact_effects(model, compound, bank, catalog, candidate, slot, orientation):
            after, _ = place(compound, candidate, slot, orientation)
            effects = effect_row(compound, after.placements[-1], after)
            return effects.e1, effects.e2, float(effects.e3)

        monkeypatch.setattr(planner, "predict_candidate", exact_effects)
        task = Task.parse(task_name)
        predictor = LearnedPredictor(None, None, 'standard')
        inventories = sample_inventories(catalog_standard(), size, 10, seed=42, task=task, solvable_only=True)
        successes = 0
        for items in inventories:
            try:
                plan = search(items, task, predictor)
            except NoFeasiblePlan:
                continue
            successes += execute_and_verify(plan, task).success
        assert successes >= 8
