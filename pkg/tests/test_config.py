"""Tests for flat key = value configuration files, MIT License"""


import os

import tensorflow as tf

from plformer.config import build_config
from plformer.config import merge_overrides
from plformer.config import read_flat_config
from plformer.errors import ValidationError
from plformer.oracle import OracleConfig
from plformer.oracle import SceneGenParams
from plformer.training import TrainConfig


class FlatConfigTest(tf.test.TestCase):

    def write(self, text):
        path = os.path.join(self.get_temp_dir(), "run.cfg")
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
        return path

    def test_parse(self):
        path = self.write("# oracle\n\ncarrier-hz = 3.5e9   # sub-6\nseed=4\n")
        self.assertEqual(read_flat_config(path), {"carrier_hz": "3.5e9", "seed": "4"})

    def test_bad_line(self):
        path = self.write("seed = 1\nno equals sign here\n")
        with self.assertRaisesRegex(ValidationError, ":2:"):
            read_flat_config(path)
        path = self.write(" = 3\n")
        with self.assertRaisesRegex(ValidationError, "empty key"):
            read_flat_config(path)

    def test_coercion(self):
        cfg = build_config(OracleConfig, {"carrier_hz": "3.5e9", "seed": "4"})
        self.assertEqual(cfg.carrier_hz, 3.5e9)
        self.assertEqual(cfg.seed, 4)
        with self.assertRaisesRegex(ValidationError, "seed"):
            build_config(OracleConfig, {"seed": "four"})

    def test_typed_values_pass_through(self):
        cfg = build_config(TrainConfig, {"num_steps": 7, "learning_rate": 0.5})
        self.assertEqual((cfg.num_steps, cfg.learning_rate), (7, 0.5))

    def test_tuple(self):
        params = build_config(SceneGenParams, {"building_size_px": "10, 40",
                                               "foliage_height_m": "2 12.5"})
        self.assertEqual(params.building_size_px, (10, 40))
        self.assertEqual(params.foliage_height_m, (2.0, 12.5))
        with self.assertRaises(ValidationError):
            build_config(SceneGenParams, {"building_size_px": "10 40 50"})

    def test_unknown_key(self):
        with self.assertRaisesRegex(ValidationError, "bogus"):
            build_config(OracleConfig, {"bogus": "1"})
        cfg = build_config(OracleConfig, {"bogus": "1"}, strict=False)
        self.assertEqual(cfg, OracleConfig())

    def test_validation_runs(self):
        with self.assertRaises(ValidationError):
            build_config(OracleConfig, {"carrier_hz": "-1"})

    def test_merge_overrides(self):
        merged = merge_overrides({"seed": "1", "carrier_hz": "3e9"},
                                 {"seed": 5, "max-pathloss-db": 150.0, "tx_height_m": None})
        self.assertEqual(merged, {"seed": 5, "carrier_hz": "3e9", "max_pathloss_db": 150.0})


if __name__ == "__main__":
    tf.test.main()
