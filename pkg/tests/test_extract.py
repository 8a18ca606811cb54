"""Tests for transmitter-aligned map extracts, MIT License"""


import json
import os

import numpy as np
import tensorflow as tf

from plformer.errors import ValidationError
from plformer.extract import align_and_extract
from plformer.extract import batch_extract
from plformer.extract import dump_extract
from plformer.extract import extract_shape
from plformer.extract import rotate_map
from plformer.extract import rotate_point
from plformer.extract import sample_scene
from plformer.oracle import generate_scene
from plformer.scene import LinkRecord
from plformer.scene import Point3
from plformer.scene import Scene
from plformer.scene import distance_3d
from plformer.selftest import extract_alignment_errors


class ExtractShapeTest(tf.test.TestCase):

    def test_shape_law(self):
        self.assertEqual(extract_shape(0, 9, 1), 3)
        self.assertEqual(extract_shape(4, 9, 1), 3)
        self.assertEqual(extract_shape(5, 9, 1), 4)
        self.assertEqual(extract_shape(13, 9, 1), 4)
        self.assertEqual(extract_shape(14, 9, 1), 5)
        self.assertEqual(extract_shape(0, 9, 0), 1)
        self.assertEqual(extract_shape(40, 9, 2), 9)


class AlignAndExtractTest(tf.test.TestCase):

    def test_empty_scene(self):
        tx, rx = Point3(20.5, 20.5, 9.0), Point3(20.5, 60.5, 1.5)
        extract = align_and_extract(Scene.empty(96, 96), tx, rx, 9)
        extract.validate()
        self.assertEqual(extract.patch_rows, 7)
        self.assertEqual(extract.shape, (63, 27, 2))
        self.assertEqual(extract.tx_patch_index, (5, 1))
        self.assertEqual(extract.tx_pixel, (49, 13))
        self.assertNear(extract.distance_m, distance_3d(tx, rx), 1e-12)
        self.assertNear(extract.angle_rad, 0.0, 1e-12)
        self.assertAllEqual(extract.pixels, np.zeros((63, 27, 2)))

    def test_foliage_lands_between_tx_and_rx(self):
        scene = Scene.empty(64, 64)
        scene.foliage_height_m[:, 30:32] = 15.0
        extract = align_and_extract(scene, Point3(10.5, 32.5, 9.0), Point3(50.5, 32.5, 1.5), 9)
        self.assertNear(extract.angle_rad, np.pi / 2, 1e-12)
        foliage = extract.pixels[:, 13, 1]
        self.assertEqual(foliage[29], 0.5)
        self.assertEqual(foliage[28], 0.5)
        self.assertEqual(foliage[30], 0.0)
        self.assertEqual(foliage[27], 0.0)

    def test_random_links_align(self):
        rng = np.random.default_rng(4)
        scene = generate_scene(128, 128, seed=4)
        for _ in range(50):
            tx = Point3(*rng.uniform(0.0, 128.0, size=2), 9.0)
            rx = Point3(*rng.uniform(0.0, 128.0, size=2), 1.5)
            pad = int(rng.integers(0, 3))
            extract = align_and_extract(scene, tx, rx, 9, pad)
            extract.validate()
            self.assertEqual(extract_alignment_errors(scene, tx, rx, extract), [])

    def test_rejects_even_patch(self):
        with self.assertRaises(ValidationError):
            align_and_extract(Scene.empty(16, 16), Point3(1, 1, 9), Point3(5, 5, 1.5), 8)

    def test_rejects_coincident_link(self):
        with self.assertRaises(ValidationError):
            align_and_extract(Scene.empty(16, 16), Point3(1, 1, 9), Point3(1, 1, 1.5), 9)


class SamplingTest(tf.test.TestCase):

    def test_outside_reads_open_space(self):
        scene = Scene.empty(8, 8)
        scene.building_mask[:] = 1
        scene.building_height_m[:] = 5.0
        mask, foliage = sample_scene(scene, np.array([-5.0, 4.5]), np.array([4.5, 4.5]))
        self.assertAllEqual(mask, [0.0, 1.0])
        self.assertAllEqual(foliage, [0.0, 0.0])

    def test_zero_rotation_is_identity(self):
        scene = generate_scene(64, 64, seed=8)
        grid = rotate_map(scene, (32.0, 32.0), 0.0)
        self.assertAllEqual(grid[..., 0], scene.building_mask)
        self.assertAllClose(grid[..., 1], scene.foliage_height_m)

    def test_full_turn_is_identity(self):
        scene = generate_scene(64, 64, seed=8)
        grid = rotate_map(scene, (32.0, 32.0), 2.0 * np.pi)
        self.assertAllEqual(grid[..., 0], scene.building_mask)
        self.assertAllClose(grid[..., 1], scene.foliage_height_m, atol=1e-9)

    def test_half_turn_mirrors_through_center(self):
        scene = generate_scene(64, 96, seed=9)
        grid = rotate_map(scene, (32.0, 48.0), np.pi)
        self.assertAllEqual(grid[..., 0], scene.building_mask[::-1, ::-1])
        self.assertAllClose(grid[..., 1], scene.foliage_height_m[::-1, ::-1], atol=1e-9)

    def test_half_turn_keeps_point_symmetric_scene(self):
        scene = Scene.empty(64, 96, scene_id="symmetric")
        scene.building_mask[10:30, 5:20] = 1
        scene.building_mask[66:86, 44:59] = 1
        scene.building_height_m[scene.building_mask == 1] = 20.0
        scene.foliage_height_m[40:45, 30:40] = 12.0
        scene.foliage_height_m[51:56, 24:34] = 12.0
        scene.validate()
        grid = rotate_map(scene, (32.0, 48.0), np.pi)
        self.assertAllEqual(grid[..., 0], scene.building_mask)
        self.assertAllClose(grid[..., 1], scene.foliage_height_m, atol=1e-6)

    def test_rotate_point(self):
        point = rotate_point(Point3(3.0, 1.0, 2.0), (1.0, 1.0), np.pi / 2)
        self.assertAllClose([point.x, point.y, point.z], [1.0, 3.0, 2.0])


class BatchExtractTest(tf.test.TestCase):

    def test_record_order_and_unknown_scene(self):
        scene = Scene.empty(64, 64, scene_id="a")
        tx = Point3(5.5, 5.5, 9.0)
        records = [
            LinkRecord("a", tx, rx, distance_3d(tx, rx), 100.0, True)
            for rx in (Point3(5.5, 50.5, 1.5), Point3(9.5, 5.5, 1.5))]
        extracts = batch_extract({"a": scene}, records, 9, threads=2)
        self.assertEqual([e.patch_rows for e in extracts], [8, 3])
        with self.assertRaises(ValidationError):
            batch_extract({"b": scene}, records, 9)

    def test_dump(self):
        extract = align_and_extract(
            Scene.empty(32, 32), Point3(4.5, 4.5, 9.0), Point3(4.5, 24.5, 1.5), 9)
        prefix = os.path.join(self.get_temp_dir(), "extract")
        dump_extract(extract, prefix)
        with open(prefix + ".json", "r", encoding="utf-8") as f:
            sidecar = json.load(f)
        self.assertEqual(sidecar["R"], extract.patch_rows)
        self.assertEqual(sidecar["C"], 3)
        with open(prefix + ".plscene", "r", encoding="utf-8") as f:
            self.assertEqual(f.readline(), "PLSCENE 1\n")


if __name__ == "__main__":
    tf.test.main()
