"""
Utility functions shared by the pipeline commands
"""

import hashlib
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Sequence, Tuple, Union


def measure_time(func: Callable[[], Any]) -> Tuple[Any, float]:
    """
    Measure execution time of a function

    Returns:
        Tuple of (result, execution_time_ms)
    """
    start = time.perf_counter()
    result = func()
    return result, (time.perf_counter() - start) * 1000


def calculate_percentiles(values: Sequence[float], percentiles: Sequence[int] = (50, 90, 95, 99)) -> Dict[int, float]:
    """Nearest-rank percentiles; all zeros for an empty input"""
    if not values:
        return {p: 0.0 for p in percentiles}
    ordered = sorted(values)
    n = len(ordered)
    return {p: ordered[int((p / 100.0) * (n - 1))] for p in percentiles}


def derive_seed(seed: int, *labels: Union[str, int]) -> int:
    """Independent 32-bit seed for a named sub-step of a seeded run"""
    text = ":".join([str(seed)] + [str(label) for label in labels])
    return int.from_bytes(hashlib.sha256(text.encode('utf-8')).digest()[:4], 'little')


def file_digest(path: Union[str, Path]) -> str:
    """sha256 of a file's bytes, for reproducibility checks"""
    h = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 16), b''):
            h.update(chunk)
    return h.hexdigest()


def parse_int_list(text: str) -> List[int]:
    """``"2,3,5"`` or ``"2-5"`` to a list of ints"""
    values: List[int] = []
    for part in text.split(','):
        part = part.strip()
        if not part:
            continue
        if '-' in part:
            lo, hi = (int(v) for v in part.split('-', 1))
            values.extend(range(lo, hi + 1))
        else:
            values.append(int(part))
    return values
