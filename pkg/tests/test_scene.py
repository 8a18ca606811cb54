"""Tests for scenes, link records and their files, MIT License"""


import os

import numpy as np
import tensorflow as tf

from plformer.errors import LinkMismatchError
from plformer.errors import SceneFormatError
from plformer.errors import ValidationError
from plformer.oracle import generate_scene
from plformer.scene import DatasetSplit
from plformer.scene import LinkRecord
from plformer.scene import Point3
from plformer.scene import Scene
from plformer.scene import check_disjoint
from plformer.scene import distance_3d
from plformer.scene import load_scene
from plformer.scene import load_scene_dir
from plformer.scene import read_dataset
from plformer.scene import read_metadata
from plformer.scene import read_predictions
from plformer.scene import save_scene
from plformer.scene import write_dataset
from plformer.scene import write_metadata
from plformer.scene import write_predictions


def small_scene(scene_id="small"):
    scene = Scene.empty(4, 3, scene_id=scene_id, resolution_m=0.5)
    scene.building_mask[1, 2] = 1
    scene.building_height_m[1, 2] = 17.25
    scene.foliage_height_m[0, 0] = 0.1
    scene.foliage_height_m[2, 3] = 30.0
    return scene


def write_text(path, text):
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)


class SceneTest(tf.test.TestCase):

    def test_distance_3d(self):
        self.assertNear(distance_3d(Point3(0, 0, 0), Point3(3, 4, 12)), 13.0, 1e-12)
        self.assertEqual(distance_3d(Point3(1, 2, 3), Point3(1, 2, 3)), 0.0)

    def test_distance_3d_is_a_metric(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            a, b, c = (Point3(*rng.uniform(-50.0, 50.0, size=2), rng.uniform(0.0, 30.0))
                       for _ in range(3))
            self.assertEqual(distance_3d(a, b), distance_3d(b, a))
            self.assertLessEqual(distance_3d(a, c), distance_3d(a, b) + distance_3d(b, c) + 1e-9)

    def test_point_rejects_negative_height(self):
        with self.assertRaises(ValidationError):
            Point3(0.0, 0.0, -1.0)

    def test_pixel_of_clamps_edges(self):
        scene = small_scene()
        self.assertEqual(scene.pixel_of(Point3(0.7, 1.2, 0.0)), (2, 1))
        self.assertEqual(scene.pixel_of(Point3(2.0, 1.5, 0.0)), (2, 3))
        self.assertTrue(scene.contains(Point3(2.0, 1.5, 0.0)))
        self.assertFalse(scene.contains(Point3(2.1, 1.0, 0.0)))

    def test_validate_rejects_foliage_on_building(self):
        scene = small_scene()
        scene.foliage_height_m[1, 2] = 3.0
        with self.assertRaises(ValidationError):
            scene.validate()

    def test_validate_rejects_height_without_building(self):
        scene = small_scene()
        scene.building_height_m[0, 1] = 4.0
        with self.assertRaises(ValidationError):
            scene.validate()

    def test_round_trip_is_bit_identical(self):
        scene = small_scene()
        path = os.path.join(self.get_temp_dir(), "small.plscene")
        save_scene(scene, path)
        loaded = load_scene(path)
        self.assertTrue(loaded.equals(scene))
        copy = os.path.join(self.get_temp_dir(), "copy.plscene")
        save_scene(loaded, copy)
        with open(path, "rb") as a, open(copy, "rb") as b:
            self.assertEqual(a.read(), b.read())

    def test_generated_scenes_round_trip(self):
        for seed, (width, height) in enumerate(((64, 64), (80, 64), (96, 128))):
            scene = generate_scene(width, height, seed=seed)
            path = os.path.join(self.get_temp_dir(), scene.id + ".plscene")
            save_scene(scene, path)
            self.assertTrue(load_scene(path).equals(scene))

    def test_single_building_pixel_round_trip(self):
        scene = Scene.empty(1, 1, scene_id="one")
        scene.building_mask[0, 0] = 1
        scene.building_height_m[0, 0] = 12.0
        path = os.path.join(self.get_temp_dir(), "one.plscene")
        save_scene(scene, path)
        loaded = load_scene(path)
        self.assertTrue(loaded.equals(scene))
        self.assertEqual(loaded.building_height_m[0, 0], 12.0)

    def test_id_comes_from_file_name(self):
        path = os.path.join(self.get_temp_dir(), "renamed.plscene")
        save_scene(small_scene("original"), path)
        loaded = load_scene(path)
        self.assertEqual(loaded.id, "renamed")
        self.assertFalse(loaded.equals(small_scene("original")))

    def test_file_layout(self):
        path = os.path.join(self.get_temp_dir(), "layout.plscene")
        save_scene(small_scene(), path)
        with open(path, "r", encoding="utf-8") as f:
            lines = f.read().split("\n")
        self.assertEqual(lines[0], "PLSCENE 1")
        self.assertEqual(lines[1], "4 3 0.5 30.0")
        self.assertEqual(lines[2], "LAYERS mask heights foliage")
        self.assertEqual(lines[4], "0 0 1 0")
        self.assertEqual(len(lines), 3 + 3 * 3 + 1)

    def test_bad_header(self):
        path = os.path.join(self.get_temp_dir(), "bad.plscene")
        write_text(path, "PLSCENE 2\n")
        with self.assertRaises(SceneFormatError) as cm:
            load_scene(path)
        self.assertEqual(cm.exception.line, 1)

    def test_short_row_reports_line(self):
        path = os.path.join(self.get_temp_dir(), "short.plscene")
        save_scene(small_scene(), path)
        with open(path, "r", encoding="utf-8") as f:
            lines = f.read().split("\n")
        lines[4] = "0 0 1"
        write_text(path, "\n".join(lines))
        with self.assertRaises(SceneFormatError) as cm:
            load_scene(path)
        self.assertEqual(cm.exception.line, 5)

    def test_mask_value_out_of_range(self):
        path = os.path.join(self.get_temp_dir(), "mask.plscene")
        save_scene(small_scene(), path)
        with open(path, "r", encoding="utf-8") as f:
            lines = f.read().split("\n")
        lines[3] = "2 0 0 0"
        write_text(path, "\n".join(lines))
        with self.assertRaises(SceneFormatError) as cm:
            load_scene(path)
        self.assertEqual(cm.exception.line, 4)

    def test_load_scene_dir(self):
        directory = os.path.join(self.get_temp_dir(), "scenes")
        os.makedirs(directory, exist_ok=True)
        save_scene(small_scene(), os.path.join(directory, "b.plscene"))
        save_scene(small_scene(), os.path.join(directory, "a.plscene"))
        scenes = load_scene_dir(directory)
        self.assertEqual(sorted(scenes), ["a", "b"])
        self.assertEqual(scenes["a"].id, "a")
        with self.assertRaises(ValidationError):
            load_scene_dir(self.get_temp_dir() + "/missing")


class LinkRecordTest(tf.test.TestCase):

    def record(self, scene_id="s", pathloss_db=120.0):
        tx, rx = Point3(1.0, 2.0, 9.0), Point3(41.0, 32.0, 1.5)
        return LinkRecord(scene_id, tx, rx, distance_3d(tx, rx), pathloss_db, False)

    def test_validate(self):
        self.record().validate()
        with self.assertRaises(ValidationError):
            self.record(pathloss_db=60.0).validate()

    def test_dataset_file(self):
        path = os.path.join(self.get_temp_dir(), "links.jsonl")
        records = [self.record("a"), self.record("b", 130.5)]
        write_dataset(records, path)
        self.assertEqual(read_dataset(path), records)

    def test_malformed_dataset_line(self):
        path = os.path.join(self.get_temp_dir(), "broken.jsonl")
        write_text(path, self.record().to_json() + "\n{\"scene_id\": 1}\n")
        with self.assertRaisesRegex(ValidationError, ":2:"):
            read_dataset(path)

    def test_metadata_timestamp(self):
        path = os.path.join(self.get_temp_dir(), "links.jsonl")
        write_metadata(path, {"seed": 3}, timestamp=False)
        self.assertEqual(read_metadata(path), {"seed": 3})
        write_metadata(path, {"seed": 3})
        self.assertIn("created", read_metadata(path))

    def test_predictions_file(self):
        path = os.path.join(self.get_temp_dir(), "pred.jsonl")
        write_predictions(path, [(0, "a", 101.5), (1, "b", 99.0)])
        self.assertEqual(read_predictions(path), {0: ("a", 101.5), 1: ("b", 99.0)})

    def test_check_disjoint(self):
        known = DatasetSplit("train", (self.record("a"),))
        novel = DatasetSplit("test_novel", (self.record("b"),))
        check_disjoint({"train": known, "test_novel": novel})
        leaked = DatasetSplit("val_novel", (self.record("a"),))
        with self.assertRaises(ValidationError):
            check_disjoint({"train": known, "val_novel": leaked})

    def test_unknown_split_name(self):
        with self.assertRaises(ValidationError):
            DatasetSplit("holdout", ())

    def test_link_mismatch_message(self):
        error = LinkMismatchError([7, 3], [])
        self.assertIn("first missing id 3", str(error))


if __name__ == "__main__":
    tf.test.main()
