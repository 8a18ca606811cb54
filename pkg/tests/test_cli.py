"""End-to-end tests of the plformer command line on tiny scenes, MIT License"""


import contextlib
import filecmp
import io
import json
import os

import tensorflow as tf

from plformer import cli
from plformer.scene import read_dataset


class CliTest(tf.test.TestCase):

    def setUp(self):
        super(CliTest, self).setUp()
        self.root = self.create_tempdir().full_path

    def path(self, *parts):
        return os.path.join(self.root, *parts)

    def run_cli(self, *argv):
        out = io.StringIO()
        with contextlib.redirect_stdout(out):
            code = cli.main(["--no-timestamp", "--threads", "1", "--quiet"] + list(argv))
        return code, out.getvalue()

    def pipeline(self, name):
        """Scenes, dataset and splits under <root>/<name>."""
        scenes, links, splits = (self.path(name, part) for part in ("scenes", "links.jsonl",
                                                                     "splits"))
        for argv in (
                ["gen-scenes", "--out", scenes, "--count", "4", "--size", "64x64",
                 "--seed", "1", "--density", "0"],
                ["gen-dataset", "--scenes", scenes, "--out", links, "--poles", "2",
                 "--ues", "6", "--seed", "2"],
                ["split", "--dataset", links, "--out", splits, "--seed", "3"]):
            code, _ = self.run_cli(*argv)
            self.assertEqual(code, cli.EXIT_OK, argv[0])
        return scenes, links, splits

    def test_pipeline_outputs(self):
        scenes, links, splits = self.pipeline("a")
        self.assertEqual(sorted(os.listdir(scenes)), [
            "scene_000.plscene", "scene_001.plscene", "scene_002.plscene",
            "scene_003.plscene", "scenes.meta.json"])
        self.assertLen(read_dataset(links), 4 * 2 * 6)
        with open(links + ".meta.json", "r", encoding="utf-8") as f:
            metadata = json.load(f)
        self.assertEqual(metadata["counts"], {"links": 48, "los": 48, "nlos": 0})
        self.assertNotIn("created", metadata)
        sizes = {name: len(read_dataset(os.path.join(splits, name + ".jsonl")))
                 for name in ("train", "val_known", "test_known", "val_novel", "test_novel")}
        self.assertEqual(sizes, {"train": 4, "val_known": 1, "test_known": 19,
                                 "val_novel": 12, "test_novel": 12})

    def test_reruns_are_byte_identical(self):
        first = self.pipeline("a")
        second = self.pipeline("b")
        for a, b in ((os.path.join(first[0], "scene_002.plscene"),
                      os.path.join(second[0], "scene_002.plscene")),
                     (os.path.join(first[0], "scenes.meta.json"),
                      os.path.join(second[0], "scenes.meta.json")),
                     (first[1], second[1]),
                     (os.path.join(first[2], "test_novel.jsonl"),
                      os.path.join(second[2], "test_novel.jsonl"))):
            self.assertTrue(filecmp.cmp(a, b, shallow=False), a)

    def test_baseline_eval_compare(self):
        _, links, splits = self.pipeline("a")
        truth = os.path.join(splits, "test_known.jsonl")
        pred = self.path("pred", "gpp.jsonl")
        report = self.path("reports", "known.json")
        code, _ = self.run_cli("baseline-3gpp", "--dataset", truth, "--out", pred)
        self.assertEqual(code, cli.EXIT_OK)

        code, printed = self.run_cli("eval", "--pred", pred, "--truth", truth,
                                     "--split", "test_known", "--out", report,
                                     "--cdf", self.path("reports", "cdf.csv"))
        self.assertEqual(code, cli.EXIT_OK)
        self.assertStartsWith(printed, "gpp: RMSE ")
        self.assertTrue(os.path.exists(self.path("reports", "cdf.csv")))

        table = self.path("reports", "table.md")
        code, printed = self.run_cli("compare", "--reports", report, "--splits", "test_known",
                                     "--out", table)
        self.assertEqual(code, cli.EXIT_OK)
        with open(table, "r", encoding="utf-8") as f:
            self.assertEqual(f.read(), printed)
        self.assertIn("| gpp |", printed)

        code, _ = self.run_cli("eval", "--pred", pred, "--truth", links, "--out", report)
        self.assertEqual(code, cli.EXIT_VALIDATION)

    def test_render_gpp(self):
        scenes, _, _ = self.pipeline("a")
        prefix = self.path("maps", "gpp")
        code, _ = self.run_cli("render", "--gpp", "--scene",
                               os.path.join(scenes, "scene_000.plscene"),
                               "--tx", "30.5,30.5", "--extent", "16", "--out", prefix)
        self.assertEqual(code, cli.EXIT_OK)
        for suffix in (".csv", ".pgm", ".json", "_overlay.png"):
            self.assertTrue(os.path.exists(prefix + suffix), suffix)

    def test_exit_codes(self):
        code, _ = self.run_cli("eval", "--pred", self.path("none.jsonl"),
                               "--truth", self.path("none.jsonl"), "--out", self.path("r.json"))
        self.assertEqual(code, cli.EXIT_IO)
        code, _ = self.run_cli("gen-scenes", "--bogus")
        self.assertEqual(code, cli.EXIT_VALIDATION)
        code, _ = self.run_cli("gen-scenes", "--out", self.path("s"), "--count", "1",
                               "--size", "32x32", "--seed", "0")
        self.assertEqual(code, cli.EXIT_VALIDATION)
        with self.assertRaises(SystemExit) as cm:
            with contextlib.redirect_stdout(io.StringIO()):
                cli.main(["--version"])
        self.assertEqual(cm.exception.code, 0)


if __name__ == "__main__":
    tf.test.main()
