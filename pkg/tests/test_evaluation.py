"""Tests for error reports, CDFs and comparison tables, MIT License"""


import os

import numpy as np
import tensorflow as tf

from plformer.errors import LinkMismatchError
from plformer.errors import NonFiniteError
from plformer.errors import ValidationError
from plformer.evaluation import combine_reports
from plformer.evaluation import error_stats
from plformer.evaluation import evaluate
from plformer.evaluation import format_comparison
from plformer.evaluation import read_report
from plformer.evaluation import read_reports
from plformer.evaluation import write_cdf_csv
from plformer.evaluation import write_report
from plformer.evaluation import write_reports
from plformer.scene import LinkRecord
from plformer.scene import Point3
from plformer.scene import distance_3d


def truth_records():
    tx = Point3(0.0, 0.0, 9.0)
    records = []
    for i, (pathloss, los) in enumerate(((100.0, True), (110.0, False), (120.0, False),
                                         (105.0, True))):
        rx = Point3(10.0 + i, 0.0, 1.5)
        records.append(LinkRecord("a" if i < 2 else "b", tx, rx, distance_3d(tx, rx),
                                  pathloss, los))
    return records


class ErrorStatsTest(tf.test.TestCase):

    def test_values(self):
        stats = error_stats([3.0, -4.0])
        self.assertEqual(stats.count, 2)
        self.assertNear(stats.rmse_db, np.sqrt(12.5), 1e-12)
        self.assertNear(stats.mae_db, 3.5, 1e-12)
        self.assertNear(stats.quantiles["p50_db"], 3.5, 1e-12)
        self.assertAllEqual(stats.abs_errors, [3.0, 4.0])

    def test_empty(self):
        stats = error_stats([])
        self.assertEqual(stats.count, 0)
        self.assertIsNone(stats.rmse_db)

    def test_non_finite_raises(self):
        with self.assertRaises(NonFiniteError):
            error_stats([1.0, np.inf])

    def test_mae_never_exceeds_rmse(self):
        rng = np.random.default_rng(5)
        for scale in (1e-9, 1.0, 1e6):
            stats = error_stats(rng.normal(scale=scale, size=257))
            self.assertLessEqual(stats.mae_db, stats.rmse_db)


class EvaluateTest(tf.test.TestCase):

    def test_prediction_dict(self):
        records = truth_records()
        predictions = {0: ("a", 101.0), 1: ("a", 108.0), 2: ("b", 123.0), 3: ("b", 105.0)}
        report = evaluate(predictions, records, split="test_known", label="ours")
        self.assertEqual(report.cell("test_known", "los").count, 2)
        self.assertEqual(report.cell("test_known", "nlos").count, 2)
        self.assertNear(report.cell("test_known", "nlos").mae_db, 2.5, 1e-12)
        self.assertNear(report.cell("test_known").rmse_db, np.sqrt(14.0 / 4.0), 1e-12)

    def test_sequence(self):
        records = truth_records()
        report = evaluate([100.0, 110.0, 120.0, 105.0], records)
        self.assertEqual(report.cell("test").rmse_db, 0.0)

    def test_missing_link(self):
        records = truth_records()
        with self.assertRaises(LinkMismatchError) as cm:
            evaluate({0: ("a", 1.0), 2: ("b", 1.0), 3: ("b", 1.0), 9: ("b", 1.0)}, records)
        self.assertEqual(cm.exception.missing, [1])
        self.assertEqual(cm.exception.extra, [9])
        self.assertIn("first missing id 1", str(cm.exception))

    def test_scene_mismatch(self):
        predictions = {0: ("a", 1.0), 1: ("b", 1.0), 2: ("b", 1.0), 3: ("b", 1.0)}
        with self.assertRaises(ValidationError):
            evaluate(predictions, truth_records())

    def test_non_finite(self):
        with self.assertRaises(ValidationError):
            evaluate([100.0, np.nan, 120.0, 105.0], truth_records())


class ReportFilesTest(tf.test.TestCase):

    def reports(self):
        records = truth_records()
        known = evaluate([101.0, 108.0, 123.0, 105.0], records, split="test_known", label="ours")
        novel = evaluate([99.0, 112.0, 121.0, 106.0], records, split="test_novel", label="ours")
        return known, novel

    def test_round_trip(self):
        known, _ = self.reports()
        path = os.path.join(self.get_temp_dir(), "report.json")
        write_report(known, path)
        loaded = read_report(path)
        self.assertEqual(loaded.label, "ours")
        self.assertEqual(loaded.cell("test_known").to_dict(), known.cell("test_known").to_dict())

    def test_several_reports(self):
        known, novel = self.reports()
        path = os.path.join(self.get_temp_dir(), "reports.json")
        write_reports([known, novel], path)
        self.assertEqual([list(r.splits) for r in read_reports(path)],
                         [["test_known"], ["test_novel"]])

    def test_combine(self):
        known, novel = self.reports()
        combined = combine_reports([known, novel])
        self.assertEqual(sorted(combined.splits), ["test_known", "test_novel"])
        with self.assertRaises(ValidationError):
            combine_reports([known, known])

    def test_cdf_csv(self):
        known, _ = self.reports()
        path = os.path.join(self.get_temp_dir(), "cdf.csv")
        write_cdf_csv(known, path)
        with open(path, "r", encoding="utf-8") as f:
            lines = f.read().splitlines()
        self.assertEqual(lines[0], "split,cell,abs_error_db,cumulative_fraction")
        self.assertLen(lines, 1 + 4 + 2 + 2)
        self.assertEqual(lines[4], "test_known,all,3.0,1.0")

    def test_comparison_table(self):
        known, novel = self.reports()
        ours = combine_reports([known, novel])
        table = format_comparison([ours, known])
        lines = table.splitlines()
        self.assertLen(lines, 4)
        self.assertTrue(lines[0].startswith("| Model | RMSE ALL test_known"))
        self.assertIn("| ours |", lines[2])
        self.assertTrue(lines[3].rstrip(" |").endswith("-"))


if __name__ == "__main__":
    tf.test.main()
