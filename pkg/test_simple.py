#!/usr/bin/env python3
"""
Simple test to verify basic functionality
"""
import sys
sys.path.insert(0, '.')

from affordlab import OraclePredictor, Task, catalog_standard, execute_and_verify, place, search
from affordlab import CompoundState


def main():
    print("🧪 Testing AffordLab basic functionality...")
    specs = {s.id: s for s in catalog_standard()}

    try:
        compound = CompoundState()
        for obj_id in (0, 7):
            compound, outcome = place(compound, specs[obj_id], 1)
        print(f"✅ Ring released over the pole: {outcome.kind.value}")
        print(f"   Compound height: {compound.height() * 10:.2f} dm")
    except Exception as e:
        print(f"❌ Simulation failed: {e}")
        import traceback
        traceback.print_exc()
        return False

    try:
        task = Task.parse("tallest")
        plan = search(tuple(specs[i] for i in (0, 7, 8)), task, OraclePredictor())
        report = execute_and_verify(plan, task)
        print(f"✅ Oracle plan: {[a.object_id for a in plan.actions]} -> {report.reason}")
    except Exception as e:
        print(f"❌ Planning failed: {e}")
        return False

    print("\n🎉 Basic functionality test passed!")
    return report.success


if __name__ == '__main__':
    if not main():
        sys.exit(1)
