import json

import numpy as np
import pandas as pd
import pytest

from src.report import render, rounded, round_sig, save_report, save_results, summary_report


class TestRounding:
    def test_significant_digits(self):
        assert round_sig(1.23456789123, 9) == 1.23456789
        assert round_sig(0.0) == 0.0

    def test_nested(self):
        data = {'a': np.float64(1 / 3), 'b': [np.int64(2), np.bool_(True)], 'c': (np.inf, -np.inf, np.nan)}
        out = rounded(data, 4)
        assert out == {'a': 0.3333, 'b': [2, True], 'c': ["inf", "-inf", None]}

    def test_brackets_stay_pairs(self):
        assert rounded({'extent': [1.1000000001, 1.1000000002]}, 9) == {'extent': [1.1, 1.1]}

    def test_frame(self):
        df = pd.DataFrame([[0.0, 0.5], [0.5, 0.0]], index=['a', 'b'], columns=['a', 'b'])
        assert rounded(df)['labels'] == ['a', 'b']


class TestRender:
    def test_json_is_sorted(self):
        text = render({'result': {'b': 1.0, 'a': 2.0}}, "json")
        assert text.index('"a"') < text.index('"b"')
        assert json.loads(text)['result']['a'] == 2.0

    def test_csv_matrix(self):
        text = render({'result': {'labels': ['x', 'y'], 'bounds': [[0, 1], [1, 0]]}}, "csv")
        assert text.splitlines()[0] == ",x,y"

    def test_table_of_rows(self):
        text = render({'result': {'table': [{'check': 'one', 'passed': True}]}}, "table")
        assert "one" in text and "True" in text

    def test_flattened_record(self):
        text = render({'result': {'extent': {'bounds': [1.0, 1.1]}}}, "table")
        assert "extent.bounds" in text

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            render({'result': {}}, "xml")


class TestReports:
    def test_summary_markers(self):
        text = summary_report("Self test", {'Seed': 1}, [("Checks", [("good", True, ""), ("bad", False, "why")])])
        assert text.startswith("=" * 70)
        assert "Checks passed: 1/2" in text
        assert "✓ good" in text
        assert "✗ bad  (why)" in text

    def test_saved_files(self, tmp_path):
        report = save_report("hello", "selftest", str(tmp_path))
        assert report.read_text() == "hello"
        results = save_results({'result': {'x': np.float64(0.5)}}, "mkdist", str(tmp_path))
        assert json.loads(results.read_text())['result']['x'] == 0.5
