#!/usr/bin/env python3
"""
AffordLab Benchmark Suite
=========================

Timings for the hot paths of data generation and planning:
- ray casting against object solids
- depth rendering
- releasing objects into a compound
- effect model forward passes
- oracle tree search
"""

import sys
import os

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from affordlab.encoder import Autoencoder, FeatureBank, ObjectEncoder
from affordlab.geometry import Pose, Ray, catalog_standard, ray_intersect
from affordlab.mogan import MoganModel, predict_candidate
from affordlab.baseline import BaselineModel
from affordlab.planner import OraclePredictor, Task, search
from affordlab.renderer import render_object
from affordlab.simulator import CompoundState, place
from affordlab.utils import calculate_percentiles, measure_time


def benchmark(name, func, iterations=100, warmup=3):
    """Run a benchmark and report results."""
    for _ in range(warmup):
        func()

    times = [measure_time(func)[1] for _ in range(iterations)]
    avg = sum(times) / len(times)
    p = calculate_percentiles(times)
    ops_per_sec = 1000 / avg if avg > 0 else float('inf')

    print(f"  {name}:")
    print(f"    Iterations: {iterations}")
    print(f"    Avg: {avg:.3f} ms | Median: {p[50]:.3f} ms")
    print(f"    P95: {p[95]:.3f} ms | P99: {p[99]:.3f} ms")
    print(f"    Throughput: {ops_per_sec:,.1f} ops/s")
    print()
    return avg


def benchmark_geometry():
    print("=" * 60)
    print("GEOMETRY BENCHMARKS")
    print("=" * 60)

    specs = {s.id: s for s in catalog_standard()}
    pose = Pose(0.0, 0.0, 0.0)
    down = Ray.towards((0.03, 0.0, 1.0), (0.0, 0.0, -1.0))
    side = Ray.towards((-1.0, 0.0, 0.05), (1.0, 0.0, 0.0))

    benchmark("ray_intersect (ring, vertical)", lambda: ray_intersect(specs[7], pose, down), iterations=2000)
    benchmark("ray_intersect (cup, horizontal)", lambda: ray_intersect(specs[12], pose, side), iterations=2000)
    benchmark("render_object (pole)", lambda: render_object(specs[0]), iterations=50)
    benchmark("render_object (cup)", lambda: render_object(specs[12]), iterations=50)


def benchmark_simulator():
    print("=" * 60)
    print("SIMULATOR BENCHMARKS")
    print("=" * 60)

    specs = {s.id: s for s in catalog_standard()}

    def ring_tower():
        compound = CompoundState()
        for obj_id in (0, 7, 8, 9, 10, 11):
            compound, _ = place(compound, specs[obj_id], 1)
        return compound

    benchmark("place x6 (rings over pole)", ring_tower, iterations=200)


def benchmark_models():
    print("=" * 60)
    print("MODEL BENCHMARKS")
    print("=" * 60)

    specs = {s.id: s for s in catalog_standard()}
    bank = FeatureBank(ObjectEncoder(Autoencoder(seed=7)), 'linear')
    compound = CompoundState()
    for obj_id in (0, 7, 8, 9):
        compound, _ = place(compound, specs[obj_id], 1)
    mogan = MoganModel(bank.feature_size, 'linear')
    baseline = BaselineModel(bank.feature_size, 'linear')

    benchmark("graph model forward (4 members)",
              lambda: predict_candidate(mogan, compound, bank, 'standard', specs[1], 1), iterations=500)
    benchmark("baseline forward (4 members)",
              lambda: predict_candidate(baseline, compound, bank, 'standard', specs[1], 1), iterations=500)


def benchmark_planner():
    print("=" * 60)
    print("PLANNER BENCHMARKS")
    print("=" * 60)

    specs = {s.id: s for s in catalog_standard()}
    oracle = OraclePredictor()
    for ids in ((0, 7, 8), (0, 6, 7, 8), (0, 6, 7, 8, 12)):
        inventory = tuple(specs[i] for i in ids)
        benchmark(f"oracle search tallest ({len(ids)} objects)",
                  lambda: search(inventory, Task.parse("tallest"), oracle), iterations=5, warmup=1)


def main():
    print()
    print("╔══════════════════════════════════════════════════════════╗")
    print("║              AffordLab Benchmark Suite                   ║")
    print("╚══════════════════════════════════════════════════════════╝")
    print()

    benchmark_geometry()
    benchmark_simulator()
    benchmark_models()
    benchmark_planner()

    print("=" * 60)
    print("ALL BENCHMARKS COMPLETED")
    print("=" * 60)


if __name__ == "__main__":
    main()
