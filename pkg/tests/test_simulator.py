#!/usr/bin/env python3
"""
Tests for the settle model and episode rollouts
"""

import numpy as np
import pytest

from affordlab.geometry import Orientation, catalog_nonlinear, catalog_standard, contains_points
from affordlab.simulator import (
    LINEAR_SLOT, SLOT_X, CompoundState, PlacementOnCollapsed, SettleKind, SimulationMode, check_collapse,
    choose_action, place, release_height, run_episode, support_top,
)


def stack(specs, *steps):
    """Place (object id, slot, orientation) triples in order"""
    compound = CompoundState()
    outcomes = []
    for obj_id, slot, orientation in steps:
        compound, outcome = place(compound, specs[obj_id], slot, orientation)
        outcomes.append(outcome)
    return compound, outcomes


class TestLinearSettling:
    """Single-column placements"""

    def test_first_object_rests_on_table(self, standard):
        """The pole stands on the table"""
        compound, (outcome,) = stack(standard, (0, 1, 'upright'))
        assert outcome.kind is SettleKind.STACKED_ON_TOP
        assert outcome.final_pose.z == pytest.approx(0.0)
        assert not compound.collapsed
        assert compound.height() == pytest.approx(0.17)

    def test_ring_passes_over_pole(self, standard):
        """A ring slides down the shaft onto the base plate"""
        compound, outcomes = stack(standard, (0, 1, 'upright'), (7, 1, 'upright'))
        assert outcomes[1].kind is SettleKind.PASSED_OVER_POLE
        assert outcomes[1].final_pose.z == pytest.approx(0.02)
        assert compound.height() == pytest.approx(0.17)

    def test_second_ring_lands_on_first(self, standard):
        """Rings stack on each other around the shaft"""
        compound, outcomes = stack(standard, (0, 1, 'upright'), (7, 1, 'upright'), (8, 1, 'upright'))
        assert outcomes[2].kind is SettleKind.PASSED_OVER_POLE
        assert outcomes[2].final_pose.z == pytest.approx(0.05)
        assert compound.placement(3).supports == (2,)

    def test_pole_on_rings(self, standard):
        """A pole released onto two rings stands on the upper one"""
        compound, outcomes = stack(standard, (7, 1, 'upright'), (8, 1, 'upright'), (0, 1, 'upright'))
        assert outcomes[2].final_pose.z == pytest.approx(0.055)
        assert compound.height() == pytest.approx(0.225)

    def test_cube_on_cube(self, standard):
        """Cubes stack flush"""
        specs = dict(standard)
        specs[99] = specs[6]
        compound, outcomes = stack(specs, (6, 1, 'upright'), (99, 1, 'upright'))
        assert outcomes[1].kind is SettleKind.STACKED_ON_TOP
        assert outcomes[1].final_pose.z == pytest.approx(0.10)

    def test_ball_on_ball_topples(self, standard):
        """Point contact between spheres is unstable"""
        compound, outcomes = stack(standard, (1, 1, 'upright'), (2, 1, 'upright'))
        assert outcomes[1].kind is SettleKind.TOPPLED_OFF
        assert compound.collapsed
        assert check_collapse(compound)

    def test_ball_on_pole_tip_topples(self, standard):
        """A ball cannot balance on the shaft"""
        compound, outcomes = stack(standard, (0, 1, 'upright'), (1, 1, 'upright'))
        assert outcomes[1].kind is SettleKind.TOPPLED_OFF

    def test_cube_rests_on_cup_rim(self, standard):
        """A cube wider than the cavity sits on the rim"""
        _, outcomes = stack(standard, (12, 1, 'upright'), (6, 1, 'upright'))
        assert outcomes[1].kind is SettleKind.RESTS_ON_RIM
        assert outcomes[1].final_pose.z == pytest.approx(0.10)

    def test_small_cup_inserts_into_big_cup(self, standard):
        """A narrower cup drops onto the bigger cup's floor"""
        _, outcomes = stack(standard, (12, 1, 'upright'), (14, 1, 'upright'))
        assert outcomes[1].kind is SettleKind.INSERTED_IN_CAVITY
        assert outcomes[1].final_pose.z == pytest.approx(0.01)

    def test_inverted_cup_is_flat_on_top(self, standard):
        """An upside-down cup carries a cube on its base"""
        _, outcomes = stack(standard, (12, 1, 'inverted'), (6, 1, 'upright'))
        assert outcomes[1].kind is SettleKind.STACKED_ON_TOP
        assert outcomes[1].final_pose.z == pytest.approx(0.10)


class TestPlaceContract:
    """Preconditions and purity of place()"""

    def test_input_compound_is_untouched(self, standard):
        """place() returns a new compound"""
        empty = CompoundState()
        after, _ = place(empty, standard[6], LINEAR_SLOT)
        assert len(empty) == 0
        assert len(after) == 1

    def test_collapsed_compound_rejected(self, standard):
        """Nothing can be placed after a collapse"""
        compound, _ = stack(standard, (1, 1, 'upright'), (2, 1, 'upright'))
        with pytest.raises(PlacementOnCollapsed):
            place(compound, standard[6], LINEAR_SLOT)

    def test_bad_slot_rejected(self, standard):
        """Slots are 0, 1 or 2"""
        with pytest.raises(ValueError, match="Slot"):
            place(CompoundState(), standard[6], 3)

    def test_release_above_support(self, standard):
        """Objects are released 15 cm above whatever is under the slot"""
        compound, _ = stack(standard, (6, 1, 'upright'))
        assert support_top(compound, 1) == pytest.approx(0.10)
        assert release_height(compound, 1) == pytest.approx(0.25)
        assert support_top(compound, 0) == pytest.approx(0.0)

    def test_top_member_prefers_latest_on_ties(self, standard):
        """Equal tops resolve to the later placement"""
        specs = dict(standard)
        specs[99] = specs[6]
        compound, _ = stack(specs, (6, 0, 'upright'), (99, 2, 'upright'))
        assert compound.top_member().step == 2


class TestNonlinearSettling:
    """Side-by-side placements"""

    def test_deck_spans_two_columns(self, nonlinear):
        """The deck bridges cubes under the outer slots"""
        compound, outcomes = stack(nonlinear, (0, 0, 'upright'), (1, 2, 'upright'), (6, 1, 'upright'))
        deck = compound.placement(3)
        assert outcomes[2].kind is SettleKind.STACKED_ON_TOP
        assert deck.pose.z == pytest.approx(0.10)
        assert deck.supports == (1, 2)
        assert not compound.collapsed

    def test_overhanging_deck_topples(self, nonlinear):
        """A deck resting on one outer cube tips over"""
        compound, outcomes = stack(nonlinear, (0, 0, 'upright'), (6, 1, 'upright'))
        assert outcomes[1].kind is SettleKind.TOPPLED_OFF
        assert check_collapse(compound)

    def test_slots_are_independent(self, nonlinear):
        """Cubes under different slots both rest on the table"""
        compound, _ = stack(nonlinear, (0, 0, 'upright'), (1, 1, 'upright'))
        assert compound.placement(2).pose.z == pytest.approx(0.0)
        assert compound.placement(2).pose.x == pytest.approx(SLOT_X[1])


class TestEpisodes:
    """Random rollouts"""

    def test_episode_is_deterministic(self):
        """The same seed yields identical records"""
        inventory = catalog_standard()
        a = run_episode(5, inventory, 'linear')
        b = run_episode(5, inventory, 'linear')
        assert [r.label_hash for r in a] == [r.label_hash for r in b]

    def test_episode_stops_at_first_collapse(self):
        """Only the final record of an episode may report a collapse"""
        records = run_episode(11, catalog_standard(), 'linear')
        assert all(r.e3 == 0 for r in records[:-1])
        assert records[-1].e3 == 1 or len(records) == len(catalog_standard())

    def test_linear_episode_uses_center_slot(self):
        """Linear rollouts always release upright over the middle"""
        for record in run_episode(2, catalog_standard(), 'linear'):
            assert record.slot == LINEAR_SLOT
            assert record.orientation is Orientation.UPRIGHT

    def test_steps_are_consecutive(self):
        """Record steps count placements from 1"""
        records = run_episode(4, catalog_standard(), 'nonlinear', catalog='standard')
        assert [r.step for r in records] == list(range(1, len(records) + 1))


def rollout(seed, specs, mode):
    """(before, after, outcome) for each release of one seeded rollout"""
    rng = np.random.default_rng(seed)
    compound = CompoundState()
    for index in rng.permutation(len(specs)):
        slot, orientation = choose_action(rng, SimulationMode.parse(mode))
        after, outcome = place(compound, specs[int(index)], slot, orientation)
        yield compound, after, outcome
        if after.collapsed:
            return
        compound = after


def interpenetrate(a, b, n=9):
    """True when sampled points of the boxes' overlap lie inside both solids"""
    box_a, box_b = a.aabb, b.aabb
    lo = np.maximum([box_a.x_min, box_a.y_min, box_a.z_min], [box_b.x_min, box_b.y_min, box_b.z_min])
    hi = np.minimum([box_a.x_max, box_a.y_max, box_a.z_max], [box_b.x_max, box_b.y_max, box_b.z_max])
    if np.any(hi - lo <= 1e-6):
        return False
    axes = [np.linspace(l, h, n + 2)[1:-1] for l, h in zip(lo, hi)]
    points = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, 3)
    return bool(np.any(contains_points(a.spec, a.pose, points) & contains_points(b.spec, b.pose, points)))


ROLLOUTS = [(catalog_standard, 'linear'), (catalog_standard, 'nonlinear'), (catalog_nonlinear, 'nonlinear')]


class TestRolloutProperties:
    """Invariants over many seeded rollouts"""

    def test_cavity_and_pole_outcomes_occur(self):
        """Linear rollouts exercise insertion into cups and rings over the pole"""
        kinds = set()
        for seed in range(500):
            kinds.update(outcome.kind for _, _, outcome in rollout(seed, catalog_standard(), 'linear'))
        assert SettleKind.INSERTED_IN_CAVITY in kinds
        assert SettleKind.PASSED_OVER_POLE in kinds

    @pytest.mark.parametrize("catalog,mode", ROLLOUTS)
    def test_settled_objects_never_overlap(self, catalog, mode):
        """Standing compounds have disjoint solids"""
        for seed in range(30):
            for _, after, _ in rollout(seed, catalog(), mode):
                if after.collapsed:
                    continue
                members = after.placements
                for i, a in enumerate(members):
                    for b in members[i + 1:]:
                        assert not interpenetrate(a, b), (seed, a.spec.name, b.spec.name)

    @pytest.mark.parametrize("catalog,mode", ROLLOUTS)
    def test_support_top_never_decreases(self, catalog, mode):
        """A successful placement only raises what the next release lands on"""
        for seed in range(30):
            for before, after, outcome in rollout(seed, catalog(), mode):
                if outcome.kind.is_failure:
                    continue
                for slot in range(len(SLOT_X)):
                    assert support_top(after, slot) >= support_top(before, slot) - 1e-12
