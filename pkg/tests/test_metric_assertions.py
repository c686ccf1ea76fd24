#!/usr/bin/env python3
"""
Tests for acceptance assertions over metric tables
"""

import pytest

from affordlab.metric_assertions import (
    CustomMetricAssertion, EffectErrorBound, EffectSpreadBound, MetricAssertion, MetricAssertionGroup,
    ModelOrdering, SuccessRateFloor, default_acceptance_assertions, e1_error_under, e2_spread_under,
    model_beats, run_metric_assertions, success_rate_at_least,
)


def error_row(model, size, e1, e2=0.01, e3=0.0):
    return {'model': model, 'tower_size': size, 'count': 10, 'e1_dm': e1, 'e2_dm': e2, 'e3': e3}


def plan_row(model, size, rate, task='tallest'):
    return {'model': model, 'task': task, 'size': size, 'samples': 10,
            'successes': int(rate / 10), 'success_rate': rate}


@pytest.fixture
def metrics():
    return {
        'errors': [error_row('mogan', 1, 0.05, 0.010), error_row('mogan', 3, 0.08, 0.012),
                   error_row('mogan', 5, 0.12, 0.020), error_row('baseline', 3, 0.20),
                   error_row('baseline', 5, 0.40)],
        'plans': [plan_row('oracle', 2, 100.0), plan_row('oracle', 3, 100.0),
                  plan_row('mogan', 2, 90.0), plan_row('mogan', 3, 80.0)],
    }


class TestMetricAssertionBase:
    """Tests for the base MetricAssertion class"""

    def test_check_metrics_not_implemented(self):
        """Subclasses must implement check_metrics"""
        with pytest.raises(NotImplementedError):
            MetricAssertion().check_metrics({})

    def test_default_message(self):
        """Default and custom error messages"""
        assert MetricAssertion().get_metrics_error_message({}) == "Metric assertion failed"
        assert MetricAssertion("Custom").get_metrics_error_message({}) == "Custom"


class TestEffectErrorBound:
    """Per-size error ceilings"""

    def test_passes_under_limit(self, metrics):
        """Worst mogan E1 error 0.12 is under 0.15"""
        assert e1_error_under(0.15).check_metrics(metrics)

    def test_fails_over_limit(self, metrics):
        """The message names the worst size"""
        assertion = EffectErrorBound(0.1)
        assert not assertion.check_metrics(metrics)
        assert "size 5" in assertion.get_metrics_error_message(metrics)

    def test_max_size_filters_rows(self, metrics):
        """Rows above max_size are ignored"""
        assert EffectErrorBound(0.1, max_size=3).check_metrics(metrics)

    def test_missing_model(self, metrics):
        """No rows for the model fails"""
        assertion = EffectErrorBound(1.0, model='other')
        assert not assertion.check_metrics(metrics)
        assert "No other error rows" in assertion.get_metrics_error_message(metrics)


class TestEffectSpreadBound:
    """Error growth between two sizes"""

    def test_spread_within_limit(self, metrics):
        """E2 error moves 0.01 dm from size 1 to 5"""
        assert e2_spread_under(0.02).check_metrics(metrics)
        assert not EffectSpreadBound(0.005).check_metrics(metrics)

    def test_missing_size(self, metrics):
        """Both sizes must be present"""
        assertion = EffectSpreadBound(1.0, sizes=(1, 7))
        assert not assertion.check_metrics(metrics)
        assert "missing" in assertion.get_metrics_error_message(metrics)


class TestModelOrdering:
    """Graph model against the baseline"""

    def test_better_model_passes(self, metrics):
        """mogan averages 0.10 against 0.30"""
        assert model_beats('mogan', 'baseline').check_metrics(metrics)

    def test_reversed_fails(self, metrics):
        """Swapping the models fails"""
        assert not ModelOrdering('baseline', 'mogan').check_metrics(metrics)

    def test_missing_model_fails(self, metrics):
        """Both models need rows"""
        assert not ModelOrdering('mogan', 'other').check_metrics(metrics)


class TestSuccessRateFloor:
    """Plan success floors"""

    def test_oracle_perfect(self, metrics):
        """All oracle rows are at 100%"""
        assert success_rate_at_least(100.0, model='oracle').check_metrics(metrics)

    def test_worst_row_reported(self, metrics):
        """The lowest row fails the floor"""
        assertion = SuccessRateFloor(85.0, model='mogan')
        assert not assertion.check_metrics(metrics)
        assert "80.0% at size 3" in assertion.get_metrics_error_message(metrics)

    def test_size_and_task_filters(self, metrics):
        """Filtering to size 2 passes; unknown tasks have no rows"""
        assert SuccessRateFloor(85.0, sizes=[2], model='mogan').check_metrics(metrics)
        assert not SuccessRateFloor(0.0, task='bridge').check_metrics(metrics)


class TestCustomAndGroups:
    """Custom predicates and AND/OR groups"""

    def test_custom_assertion(self, metrics):
        """Predicates run on the metrics; lookup errors count as failure"""
        assert CustomMetricAssertion(lambda m: len(m['plans']) == 4).check_metrics(metrics)
        assert not CustomMetricAssertion(lambda m: m['missing']).check_metrics(metrics)

    def test_and_group(self, metrics):
        """AND fails when any member fails and lists it"""
        group = MetricAssertionGroup("AND").add(e1_error_under(0.15)).add(EffectErrorBound(0.01))
        assert not group.check_metrics(metrics)
        assert len(group.failed_assertions) == 1
        assert "1." in group.get_failure_report()

    def test_or_group(self, metrics):
        """OR passes when any member passes"""
        group = MetricAssertionGroup("or").add(e1_error_under(0.15)).add(EffectErrorBound(0.01))
        assert group.check_metrics(metrics)

    def test_bad_logic(self):
        """Only AND and OR are supported"""
        with pytest.raises(ValueError):
            MetricAssertionGroup("XOR")


class TestRunAssertions:
    """Running assertion lists"""

    def test_defaults_follow_tables(self, metrics):
        """Default checks cover errors, ordering and plans"""
        assertions = default_acceptance_assertions(metrics)
        kinds = {type(a) for a in assertions}
        assert kinds == {EffectErrorBound, EffectSpreadBound, ModelOrdering, SuccessRateFloor}
        ok, failures = run_metric_assertions(metrics, assertions)
        assert ok and failures == []

    def test_empty_metrics_have_no_defaults(self):
        """Nothing to check without tables"""
        assert default_acceptance_assertions({}) == []

    def test_fail_fast(self, metrics):
        """Stops at the first failure"""
        assertions = [EffectErrorBound(0.01), EffectErrorBound(0.02)]
        ok, failures = run_metric_assertions(metrics, assertions, fail_fast=True)
        assert not ok and len(failures) == 1
        ok, failures = run_metric_assertions(metrics, assertions)
        assert len(failures) == 2
