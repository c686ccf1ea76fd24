"""
Per-tower-size prediction errors

Predictors are plain callables mapping a sample to (e1 rows, e2 rows,
collapse probability), so the graph model, the baseline and the labels
themselves can be scored the same way.
"""

from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

Prediction = Tuple[np.ndarray, np.ndarray, float]
Predictor = Callable[[object], Prediction]

HEADS = ('e1', 'e2', 'e3')


def oracle_predict(sample) -> Prediction:
    """The sample's own labels"""
    return sample.e1, sample.e2, float(sample.e3)


def size_errors(predict: Predictor, samples: Sequence) -> Dict[str, Dict[int, float]]:
    """Mean absolute error per head and tower size.

    E1/E2 average every component of every member row; sizes without member
    rows (a single object) report 0.
    """
    sums = {head: {} for head in HEADS}
    counts = {head: {} for head in HEADS}
    for sample in samples:
        e1, e2, e3 = predict(sample)
        size = sample.tower_size
        for head, err in (('e1', np.abs(np.asarray(e1) - sample.e1)),
                          ('e2', np.abs(np.asarray(e2) - sample.e2)),
                          ('e3', np.array([abs(e3 - sample.e3)]))):
            sums[head][size] = sums[head].get(size, 0.0) + float(err.sum())
            counts[head][size] = counts[head].get(size, 0) + int(err.size)
    return {head: {size: (sums[head][size] / counts[head][size]) if counts[head][size] else 0.0
                   for size in sorted(sums[head])}
            for head in HEADS}


def error_table(predictors: Dict[str, Predictor], samples: Sequence) -> List[Dict[str, object]]:
    """Rows of model, tower_size, count, e1_dm, e2_dm, e3 sorted by model then size"""
    sizes: Dict[int, int] = {}
    for s in samples:
        sizes[s.tower_size] = sizes.get(s.tower_size, 0) + 1
    rows = []
    for name, predict in predictors.items():
        errors = size_errors(predict, samples)
        for size in sorted(sizes):
            rows.append({
                'model': name,
                'tower_size': size,
                'count': sizes[size],
                'e1_dm': round(errors['e1'].get(size, 0.0), 3),
                'e2_dm': round(errors['e2'].get(size, 0.0), 3),
                'e3': round(errors['e3'].get(size, 0.0), 3),
            })
    return rows


def format_table(rows: Sequence[Dict[str, object]]) -> str:
    lines = [f"{'model':<10} {'size':>4} {'n':>5} {'E1 (dm)':>8} {'E2 (dm)':>8} {'E3':>6}"]
    for r in rows:
        lines.append(f"{r['model']:<10} {r['tower_size']:>4} {r['count']:>5} "
                     f"{r['e1_dm']:>8.3f} {r['e2_dm']:>8.3f} {r['e3']:>6.3f}")
    return "\n".join(lines)


def success_table(verification_rows: Sequence[Dict[str, object]]) -> List[Dict[str, object]]:
    """Collapse per-inventory verification rows to success rates per model, task and size"""
    groups: Dict[Tuple[str, str, int], List[bool]] = {}
    for row in verification_rows:
        key = (str(row['model']), str(row['task']), int(row['size']))
        groups.setdefault(key, []).append(bool(row['success']))
    rows = []
    for (model, task, size), outcomes in sorted(groups.items()):
        rows.append({
            'model': model,
            'task': task,
            'size': size,
            'samples': len(outcomes),
            'successes': sum(outcomes),
            'success_rate': round(100.0 * sum(outcomes) / len(outcomes), 1),
        })
    return rows
