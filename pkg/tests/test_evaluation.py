#!/usr/bin/env python3
"""
Tests for per-size error tables and plan success summaries
"""

import pytest

from affordlab.evaluation import error_table, format_table, oracle_predict, size_errors, success_table
from affordlab.mogan import prepare_samples


class TestSizeErrors:
    """Mean absolute errors per head and tower size"""

    def test_oracle_is_exact(self, linear_records, linear_bank):
        """Labels scored against themselves give zero error"""
        samples = prepare_samples(linear_records, linear_bank)
        errors = size_errors(oracle_predict, samples)
        for head in ('e1', 'e2', 'e3'):
            assert all(v == 0.0 for v in errors[head].values())

    def test_constant_offset(self, linear_records, linear_bank):
        """Shifting every E1 component by 0.1 dm gives 0.1 error wherever rows exist"""
        samples = [s for s in prepare_samples(linear_records, linear_bank) if s.k > 0]

        def shifted(sample):
            return sample.e1 + 0.1, sample.e2, float(sample.e3)

        errors = size_errors(shifted, samples)
        assert all(v == pytest.approx(0.1) for v in errors['e1'].values())
        assert all(v == 0.0 for v in errors['e2'].values())


class TestErrorTable:
    """Rows per model and size"""

    def test_rows_cover_every_size(self, linear_records, linear_bank):
        """Each model reports every tower size present"""
        samples = prepare_samples(linear_records, linear_bank)
        rows = error_table({'oracle': oracle_predict}, samples)
        sizes = sorted({s.tower_size for s in samples})
        assert [r['tower_size'] for r in rows] == sizes
        assert sum(r['count'] for r in rows) == len(samples)
        assert set(rows[0]) == {'model', 'tower_size', 'count', 'e1_dm', 'e2_dm', 'e3'}

    def test_format_table_has_header(self):
        """Formatted tables start with a header line"""
        text = format_table([{'model': 'mogan', 'tower_size': 2, 'count': 5,
                              'e1_dm': 0.1, 'e2_dm': 0.02, 'e3': 0.0}])
        assert text.splitlines()[0].split()[:2] == ['model', 'size']
        assert "mogan" in text.splitlines()[1]


class TestSuccessTable:
    """Success rate per model, task and size"""

    def test_rates_in_percent(self):
        """Three of four successes is 75%"""
        rows = [{'model': 'oracle', 'task': 'tallest', 'size': 3, 'success': s}
                for s in (True, True, False, True)]
        table = success_table(rows)
        assert table == [{'model': 'oracle', 'task': 'tallest', 'size': 3, 'samples': 4,
                          'successes': 3, 'success_rate': 75.0}]

    def test_groups_are_sorted(self):
        """Rows are ordered by model, task, then size"""
        rows = [{'model': m, 'task': 'shortest', 'size': n, 'success': True}
                for m, n in (('mogan', 3), ('baseline', 2), ('mogan', 2))]
        table = success_table(rows)
        assert [(r['model'], r['size']) for r in table] == [('baseline', 2), ('mogan', 2), ('mogan', 3)]

    def test_rate_is_rounded(self):
        """One of three is reported to one decimal"""
        rows = [{'model': 'm', 'task': 't', 'size': 2, 'success': s} for s in (True, False, False)]
        assert success_table(rows)[0]['success_rate'] == 33.3

    def test_no_rows(self):
        """An empty input gives an empty table"""
        assert success_table([]) == []
