"""Tests for dense radio maps and their files, MIT License"""


import filecmp
import json
import os

import numpy as np
import tensorflow as tf

from plformer.baselines import GppConfig
from plformer.baselines import gpp_umi_pathloss
from plformer.errors import ValidationError
from plformer.extract import align_and_extract
from plformer.oracle import OracleConfig
from plformer.oracle import fspl_db
from plformer.radiomap import GppPredictor
from plformer.radiomap import OraclePredictor
from plformer.radiomap import SurrogatePredictor
from plformer.radiomap import render_radiomap
from plformer.radiomap import to_gray
from plformer.radiomap import write_radiomap
from plformer.scene import Point3
from plformer.scene import Scene
from plformer.scene import distance_3d
from plformer.transformer import ModelConfig
from plformer.transformer import SurrogateModel
from plformer.transformer import predict


def corner_block_scene():
    scene = Scene.empty(64, 64, scene_id="corner")
    scene.building_mask[0:10, 0:10] = 1
    scene.building_height_m[0:10, 0:10] = 20.0
    scene.validate()
    return scene


class RenderTest(tf.test.TestCase):

    def test_oracle_on_open_ground_is_fspl(self):
        scene = Scene.empty(64, 64)
        tx = Point3(32.3, 31.7, 9.0)
        radiomap = render_radiomap(scene, tx, OraclePredictor(), extent_m=20.0)
        self.assertEqual(radiomap.values.shape, (20, 20))
        self.assertFalse(np.any(radiomap.masked))
        self.assertNear(radiomap.x_m[0], 22.8, 1e-9)
        self.assertNear(radiomap.y_m[-1], 41.2, 1e-9)
        carrier = OracleConfig().carrier_hz
        for i, j in ((0, 0), (7, 12), (19, 3)):
            rx = Point3(float(radiomap.x_m[j]), float(radiomap.y_m[i]), 1.5)
            self.assertNear(radiomap.values[i, j], fspl_db(distance_3d(tx, rx), carrier), 1e-6)

    def test_masked_pixels(self):
        scene = corner_block_scene()
        tx = Point3(5.5, 15.5, 9.0)
        radiomap = render_radiomap(scene, tx, GppPredictor(), extent_m=20.0)
        self.assertNear(radiomap.x_m[0], -4.0, 1e-9)
        self.assertTrue(np.all(radiomap.masked[:, 0]))
        self.assertTrue(radiomap.masked[1, 6])
        self.assertFalse(radiomap.masked[14, 16])

    def test_surrogate_predicts_off_scene(self):
        scene = corner_block_scene()
        tx = Point3(5.5, 15.5, 9.0)
        model = SurrogateModel(ModelConfig(patch_size=3, hidden_size=8, num_layers=1,
                                           num_heads=2, mlp_dim=8, dtype="float64"))
        predictor = SurrogatePredictor(model, pad_patches=0)
        radiomap = render_radiomap(scene, tx, predictor, extent_m=20.0)
        self.assertFalse(np.any(radiomap.masked[:, 0]))
        self.assertTrue(radiomap.masked[1, 6])
        rx = Point3(float(radiomap.x_m[0]), float(radiomap.y_m[12]), 1.5)
        expected = predict(model, [align_and_extract(scene, tx, rx, 3, 0)])
        self.assertNear(radiomap.values[12, 0], expected[0], 1e-9)

    def test_gpp_predictor(self):
        scene = Scene.empty(64, 64)
        tx = Point3(30.5, 30.5, 9.0)
        radiomap = render_radiomap(scene, tx, GppPredictor(), extent_m=10.0)
        rx = Point3(float(radiomap.x_m[9]), float(radiomap.y_m[2]), 1.5)
        d3d = distance_3d(tx, rx)
        expected = gpp_umi_pathloss(np.hypot(rx.x - tx.x, rx.y - tx.y), d3d, GppConfig(), True)
        self.assertNear(radiomap.values[2, 9], expected, 1e-9)

    def test_transmitter_in_building(self):
        scene = corner_block_scene()
        with self.assertRaises(ValidationError):
            render_radiomap(scene, Point3(5.0, 5.0, 9.0), GppPredictor())
        with self.assertRaises(ValidationError):
            render_radiomap(scene, Point3(70.0, 5.0, 9.0), GppPredictor())
        with self.assertRaises(ValidationError):
            render_radiomap(scene, Point3(30.0, 30.0, 9.0), GppPredictor(), extent_m=0.0)


class RadioMapFilesTest(tf.test.TestCase):

    def test_gray_levels(self):
        gray = to_gray(np.array([60.0, 160.0, np.nan, np.inf, 40.0, 110.0]))
        self.assertAllEqual(gray, [255, 0, 0, 0, 255, 128])

    def test_files(self):
        scene = corner_block_scene()
        tx = Point3(15.5, 20.5, 9.0)
        radiomap = render_radiomap(scene, tx, GppPredictor(), extent_m=20.0)
        prefix = os.path.join(self.get_temp_dir(), "map")
        write_radiomap(radiomap, scene, prefix)

        with open(prefix + ".csv", "r", encoding="utf-8") as f:
            rows = f.read().splitlines()
        self.assertLen(rows, 20)
        first = np.array([float(value) for value in rows[0].split(",")])
        self.assertAllClose(first, radiomap.values[-1])

        with open(prefix + ".pgm", "rb") as f:
            data = f.read()
        header = b"P5\n20 20\n255\n"
        self.assertTrue(data.startswith(header))
        self.assertLen(data, len(header) + 400)

        with open(prefix + ".json", "r", encoding="utf-8") as f:
            sidecar = json.load(f)
        self.assertEqual(sidecar["scene_id"], "corner")
        self.assertEqual(sidecar["size_px"], [20, 20])
        self.assertEqual(sidecar["row_order"], "max_y_first")
        self.assertTrue(os.path.exists(prefix + "_overlay.png"))

    def test_files_are_reproducible(self):
        scene = corner_block_scene()
        tx = Point3(15.5, 20.5, 9.0)
        prefixes = []
        for name in ("a", "b"):
            radiomap = render_radiomap(scene, tx, GppPredictor(), extent_m=20.0)
            prefixes.append(os.path.join(self.get_temp_dir(), name))
            write_radiomap(radiomap, scene, prefixes[-1])
        for suffix in (".csv", ".pgm", ".json", "_overlay.png"):
            self.assertTrue(filecmp.cmp(prefixes[0] + suffix, prefixes[1] + suffix,
                                        shallow=False), suffix)


if __name__ == "__main__":
    tf.test.main()
