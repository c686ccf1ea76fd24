"""
Acceptance assertions over emitted metric tables

Assertions read a metrics dictionary with two optional tables:
``errors`` (rows of model, tower_size, count, e1_dm, e2_dm, e3) and
``plans`` (rows of model, task, size, samples, successes, success_rate).
"""

from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

Metrics = Dict[str, Any]


def _error_rows(metrics: Metrics, model: str) -> List[Dict[str, Any]]:
    return [r for r in metrics.get('errors', []) if r.get('model') == model]


class MetricAssertion:
    """Base class for assertions over aggregated metrics"""

    def __init__(self, message: str = ""):
        self.message = message

    def check_metrics(self, metrics: Metrics) -> bool:
        raise NotImplementedError

    def get_metrics_error_message(self, metrics: Metrics) -> str:
        return self.message or "Metric assertion failed"


class EffectErrorBound(MetricAssertion):
    """Every tower size up to ``max_size`` has ``head`` error at most ``limit``"""

    def __init__(self, limit: float, head: str = 'e1_dm', model: str = 'mogan', max_size: int = 5,
                 message: str = ""):
        super().__init__(message)
        self.limit = limit
        self.head = head
        self.model = model
        self.max_size = max_size

    def _worst(self, metrics: Metrics) -> Optional[Tuple[int, float]]:
        rows = [r for r in _error_rows(metrics, self.model) if r['tower_size'] <= self.max_size]
        if not rows:
            return None
        row = max(rows, key=lambda r: r[self.head])
        return row['tower_size'], float(row[self.head])

    def check_metrics(self, metrics: Metrics) -> bool:
        worst = self._worst(metrics)
        return worst is not None and worst[1] <= self.limit

    def get_metrics_error_message(self, metrics: Metrics) -> str:
        worst = self._worst(metrics)
        if worst is None:
            return self.message or f"No {self.model} error rows to check"
        return (self.message or
                f"{self.model} {self.head} {worst[1]:.3f} at size {worst[0]} exceeds {self.limit}")


class EffectSpreadBound(MetricAssertion):
    """``head`` error differs by at most ``limit`` between two tower sizes"""

    def __init__(self, limit: float, head: str = 'e2_dm', model: str = 'mogan',
                 sizes: Tuple[int, int] = (1, 5), message: str = ""):
        super().__init__(message)
        self.limit = limit
        self.head = head
        self.model = model
        self.sizes = sizes

    def _spread(self, metrics: Metrics) -> Optional[float]:
        by_size = {r['tower_size']: float(r[self.head]) for r in _error_rows(metrics, self.model)}
        if any(s not in by_size for s in self.sizes):
            return None
        return abs(by_size[self.sizes[0]] - by_size[self.sizes[1]])

    def check_metrics(self, metrics: Metrics) -> bool:
        spread = self._spread(metrics)
        return spread is not None and spread <= self.limit

    def get_metrics_error_message(self, metrics: Metrics) -> str:
        spread = self._spread(metrics)
        if spread is None:
            return self.message or f"Sizes {self.sizes} missing from {self.model} errors"
        return self.message or f"{self.head} spread {spread:.3f} exceeds {self.limit}"


class ModelOrdering(MetricAssertion):
    """``better``'s mean ``head`` error at sizes >= ``min_size`` is not above ``worse``'s"""

    def __init__(self, better: str = 'mogan', worse: str = 'baseline', head: str = 'e1_dm',
                 min_size: int = 3, message: str = ""):
        super().__init__(message)
        self.better = better
        self.worse = worse
        self.head = head
        self.min_size = min_size

    def _mean(self, metrics: Metrics, model: str) -> Optional[float]:
        values = [float(r[self.head]) for r in _error_rows(metrics, model) if r['tower_size'] >= self.min_size]
        return sum(values) / len(values) if values else None

    def check_metrics(self, metrics: Metrics) -> bool:
        a, b = self._mean(metrics, self.better), self._mean(metrics, self.worse)
        return a is not None and b is not None and a <= b

    def get_metrics_error_message(self, metrics: Metrics) -> str:
        a, b = self._mean(metrics, self.better), self._mean(metrics, self.worse)
        return (self.message or
                f"{self.better} {self.head} ({a}) is not below {self.worse} ({b}) at sizes >= {self.min_size}")


class SuccessRateFloor(MetricAssertion):
    """Plan success rate (percent) at least ``min_rate`` for the selected rows"""

    def __init__(self, min_rate: float, sizes: Optional[Sequence[int]] = None, task: Optional[str] = None,
                 model: Optional[str] = None, message: str = ""):
        super().__init__(message)
        self.min_rate = min_rate
        self.sizes = set(sizes) if sizes else None
        self.task = task
        self.model = model

    def _rows(self, metrics: Metrics) -> List[Dict[str, Any]]:
        rows = metrics.get('plans', [])
        return [r for r in rows
                if (self.sizes is None or r['size'] in self.sizes)
                and (self.task is None or r.get('task') == self.task)
                and (self.model is None or r.get('model') == self.model)]

    def check_metrics(self, metrics: Metrics) -> bool:
        rows = self._rows(metrics)
        return bool(rows) and all(float(r['success_rate']) >= self.min_rate for r in rows)

    def get_metrics_error_message(self, metrics: Metrics) -> str:
        rows = self._rows(metrics)
        if not rows:
            return self.message or "No plan rows to check"
        worst = min(rows, key=lambda r: float(r['success_rate']))
        return (self.message or
                f"Success rate {float(worst['success_rate']):.1f}% at size {worst['size']} "
                f"is below minimum {self.min_rate}%")


class CustomMetricAssertion(MetricAssertion):
    """Assertion backed by a user-supplied predicate"""

    def __init__(self, assertion_func: Callable[[Metrics], bool], message: str = ""):
        super().__init__(message)
        self.assertion_func = assertion_func

    def check_metrics(self, metrics: Metrics) -> bool:
        try:
            return bool(self.assertion_func(metrics))
        except (KeyError, TypeError, ValueError):
            return False

    def get_metrics_error_message(self, metrics: Metrics) -> str:
        return self.message or "Custom metric assertion failed"


class MetricAssertionGroup(MetricAssertion):
    """Group of assertions combined with AND/OR logic"""

    def __init__(self, logic: str = "AND", message: str = ""):
        super().__init__(message)
        self.logic = logic.upper()
        if self.logic not in ("AND", "OR"):
            raise ValueError(f"Unknown logic operator: {self.logic}")
        self.assertions: List[MetricAssertion] = []
        self.failed_assertions: List[Tuple[MetricAssertion, str]] = []

    def add(self, assertion: MetricAssertion) -> "MetricAssertionGroup":
        self.assertions.append(assertion)
        return self

    def check_metrics(self, metrics: Metrics) -> bool:
        self.failed_assertions = []
        results = []
        for assertion in self.assertions:
            passed = assertion.check_metrics(metrics)
            if not passed:
                self.failed_assertions.append((assertion, assertion.get_metrics_error_message(metrics)))
            results.append(passed)
        return all(results) if self.logic == "AND" else any(results)

    def get_failure_report(self) -> str:
        if not self.failed_assertions:
            return ""
        lines = [f"Metric assertion group ({self.logic}) failed:"]
        for i, (_, msg) in enumerate(self.failed_assertions, 1):
            lines.append(f"  {i}. {msg}")
        return "\n".join(lines)

    def get_metrics_error_message(self, metrics: Metrics) -> str:
        return self.message or self.get_failure_report() or "Metric assertion group failed"


def e1_error_under(limit: float, model: str = 'mogan', max_size: int = 5) -> EffectErrorBound:
    return EffectErrorBound(limit, 'e1_dm', model, max_size)


def e2_spread_under(limit: float, model: str = 'mogan', sizes: Tuple[int, int] = (1, 5)) -> EffectSpreadBound:
    return EffectSpreadBound(limit, 'e2_dm', model, sizes)


def model_beats(better: str, worse: str, head: str = 'e1_dm', min_size: int = 3) -> ModelOrdering:
    return ModelOrdering(better, worse, head, min_size)


def success_rate_at_least(min_rate: float, sizes: Optional[Sequence[int]] = None,
                          task: Optional[str] = None, model: Optional[str] = None) -> SuccessRateFloor:
    return SuccessRateFloor(min_rate, sizes, task, model)


def default_acceptance_assertions(metrics: Metrics) -> List[MetricAssertion]:
    """Checks that apply to whichever tables are present"""
    assertions: List[MetricAssertion] = []
    models = {r.get('model') for r in metrics.get('errors', [])}
    if 'mogan' in models:
        assertions.append(e1_error_under(0.15))
        assertions.append(e2_spread_under(0.02))
    if {'mogan', 'baseline'} <= models:
        assertions.append(model_beats('mogan', 'baseline'))
    plan_models = {r.get('model') for r in metrics.get('plans', [])}
    if 'oracle' in plan_models:
        assertions.append(success_rate_at_least(100.0, sizes=range(2, 6), model='oracle'))
    for model in plan_models - {'oracle'}:
        assertions.append(success_rate_at_least(80.0, sizes=(2, 3), model=model))
    return assertions


def run_metric_assertions(metrics: Metrics, assertions: Sequence[MetricAssertion],
                          fail_fast: bool = False) -> Tuple[bool, List[str]]:
    """
    Run assertions against metrics

    Returns:
        Tuple of (success, failure messages)
    """
    failed = []
    for assertion in assertions:
        if not assertion.check_metrics(metrics):
            failed.append(assertion.get_metrics_error_message(metrics))
            if fail_fast:
                break
    return not failed, failed
