"""Tests for the built-in self-check suites, MIT License"""


import tensorflow as tf

from plformer import selftest
from plformer.oracle import los_clear
from plformer.scene import Point3
from plformer.scene import Scene


class SelfTestTest(tf.test.TestCase):

    def assertChecksPass(self, checks):
        failed = ["{}: {}".format(check.name, check.detail) for check in checks
                  if not check.passed]
        self.assertEmpty(failed)

    def test_gradient_suite(self):
        self.assertChecksPass(selftest.gradient_suite(seed=0))

    def test_geometry_suite(self):
        checks = selftest.geometry_suite(seed=0, num_links=100, num_rotations=0)
        self.assertEqual([check.name for check in checks], [
            "shape law and alignment", "rotation invariance foliage",
            "rotation invariance mask"])
        self.assertChecksPass(checks)

    def test_oracle_spot_values(self):
        checks = selftest.oracle_suite(seed=0, num_los_links=1, num_fspl_links=20,
                                        num_reflection_links=20)
        self.assertChecksPass(
            [check for check in checks if check.name != "los_clear vs supersampling"])

    def test_reflection_scene(self):
        scene = selftest.reflection_scene()
        self.assertEqual(scene.building_mask[20, 30], 1)
        self.assertEqual(scene.building_mask[40, 30], 1)
        self.assertEqual(scene.building_mask[35, 30], 0)

    def test_supersampling_sees_clipped_corner(self):
        scene = Scene.empty(32, 32)
        scene.building_mask[10, 10] = 1
        scene.building_height_m[10, 10] = 10.0
        a, b = Point3(0.5, 21.49, 9.0), Point3(21.49, 0.5, 1.5)
        self.assertFalse(los_clear(scene, a, b))
        self.assertFalse(selftest.supersampled_los(scene, a, b))
        self.assertTrue(selftest.supersampled_los(scene, a, Point3(0.5, 0.5, 1.5)))

    def test_run_selected_suite(self):
        results = selftest.run_selftest(["oracle"], seed=0)
        self.assertEqual([result.name for result in results], ["oracle"])
        self.assertGreater(results[0].seconds, 0.0)


if __name__ == "__main__":
    tf.test.main()
