"""Gradient, geometry and oracle self-checks run by `plformer selftest`, MIT License"""


import dataclasses
import logging
import time

import numpy as np
import tensorflow as tf

from plformer import ops
from plformer.extract import align_and_extract
from plformer.extract import extract_shape
from plformer.extract import rotate_point
from plformer.extract import rotate_scene
from plformer.oracle import OracleConfig
from plformer.oracle import extract_walls
from plformer.oracle import fspl_db
from plformer.oracle import foliage_loss_db
from plformer.oracle import generate_scene
from plformer.oracle import los_clear
from plformer.oracle import path_loss
from plformer.oracle import reflected_rays
from plformer.scene import Point3
from plformer.scene import Scene
from plformer.scene import distance_2d
from plformer.scene import distance_3d
from plformer.transformer import ModelConfig
from plformer.transformer import SurrogateModel


logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclasses.dataclass(frozen=True)
class SuiteResult:
    name: str
    checks: tuple
    seconds: float

    @property
    def passed(self):
        return all(check.passed for check in self.checks)


def _weighted_sum(rng, shape):
    weights = tf.constant(rng.normal(size=shape))
    return lambda y: tf.reduce_sum(y * weights)


def op_cases(rng):
    """(name, scalar function, inputs) for every differentiable op."""
    away_from_kink = rng.normal(size=(4, 5))
    away_from_kink[np.abs(away_from_kink) < 0.05] += 0.1
    w = {}
    for key, shape in (("matmul", (3, 2)), ("batched", (2, 3, 5)), ("add", (2, 3, 4)),
                       ("scale", (3, 4)), ("softmax", (2, 5)), ("layer_norm", (3, 6)),
                       ("gelu", (4, 5)), ("relu", (4, 5)), ("linear", (2, 3, 5)),
                       ("concat", (2, 7)), ("slice", (2, 3)), ("mean", (3,))):
        w[key] = _weighted_sum(rng, shape)
    n = rng.normal
    return [
        ("matmul", lambda a, b: w["matmul"](ops.matmul(a, b)), [n(size=(3, 4)), n(size=(4, 2))]),
        ("matmul_batched", lambda a, b: w["batched"](ops.matmul(a, b)),
         [n(size=(2, 3, 4)), n(size=(2, 4, 5))]),
        ("add", lambda a, b: w["add"](ops.add(a, b)), [n(size=(2, 3, 4)), n(size=(4,))]),
        ("scale", lambda x: w["scale"](ops.scale(x, 0.7)), [n(size=(3, 4))]),
        ("softmax", lambda x: w["softmax"](ops.softmax(x)), [n(size=(2, 5))]),
        ("layer_norm", lambda x, g, b: w["layer_norm"](ops.layer_norm(x, g, b)),
         [n(size=(3, 6)), 1.0 + 0.1 * n(size=(6,)), n(size=(6,))]),
        ("gelu", lambda x: w["gelu"](ops.gelu(x)), [n(size=(4, 5))]),
        ("relu", lambda x: w["relu"](ops.relu(x)), [away_from_kink]),
        ("linear", lambda x, k, b: w["linear"](ops.linear(x, k, b)),
         [n(size=(2, 3, 4)), n(size=(4, 5)), n(size=(5,))]),
        ("concat", lambda a, b: w["concat"](ops.concat([a, b], axis=1)),
         [n(size=(2, 3)), n(size=(2, 4))]),
        ("slice", lambda x: w["slice"](ops.tensor_slice(x, [1, 1], [2, 3])), [n(size=(4, 5))]),
        ("mean", lambda x: w["mean"](ops.mean(x, axis=1)) + ops.mean(tf.square(x)),
         [n(size=(3, 4))]),
        ("mse_loss", lambda x, t: ops.mse_loss(x, t), [n(size=(3, 4)), n(size=(3, 4))])]


def model_loss_case(seed=0, patch_rows=3, batch=2):
    """A float64 desk-config model and its loss on random inputs."""
    config = ModelConfig(dtype="float64", seed=seed)
    model = SurrogateModel(config)
    rng = np.random.default_rng(seed)
    P, C = config.patch_size, config.patch_cols
    images = tf.constant(rng.uniform(size=(batch, patch_rows * P, C * P, config.channels)))
    distances = tf.constant(rng.uniform(0.1, 1.0, size=(batch,)))
    targets = tf.constant(rng.normal(size=(batch,)))

    def loss(*params):
        return ops.mse_loss(model(images, distances), targets)
    return model, loss


def gradient_suite(seed=0, op_tol=1e-6, model_tol=1e-3, max_elements=3):
    rng = np.random.default_rng(seed)
    checks = []
    for name, f, inputs in op_cases(rng):
        report = ops.grad_check(f, inputs, tol=op_tol)
        checks.append(Check("op " + name, report.passed,
                            "max rel err {:.2e}".format(report.max_rel_error)))
    model, loss = model_loss_case(seed)
    report = ops.grad_check(loss, model.parameters(), tol=model_tol,
                            max_elements=max_elements, seed=seed)
    checks.append(Check("full model", report.passed, "max rel err {:.2e} over {} elements".format(
        report.max_rel_error, report.checked)))
    return checks


def random_free_point(rng, scene, margin_m, height_m, center=None, radius_m=None):
    free = scene.building_mask == 0
    for _ in range(10000):
        if center is None:
            x = rng.uniform(margin_m, scene.width_m - margin_m)
            y = rng.uniform(margin_m, scene.height_m - margin_m)
        else:
            r = radius_m * np.sqrt(rng.uniform())
            a = rng.uniform(0.0, 2.0 * np.pi)
            x, y = center[0] + r * np.cos(a), center[1] + r * np.sin(a)
        point = Point3(float(x), float(y), height_m)
        row, col = scene.pixel_of(point)
        if free[row, col]:
            return point
    raise RuntimeError("no free point found in scene {}".format(scene.id))


def extract_alignment_errors(scene, tx, rx, extract):
    """Shape-law and receiver-alignment violations of one extract, as messages."""
    errors = []
    P = extract.patch_size
    res = scene.resolution_m
    d2 = distance_2d(tx, rx)
    row_gap = int(np.floor(d2 / res + 0.5))
    if extract.patch_rows != extract_shape(row_gap, P, extract.pad_patches):
        errors.append("R={} breaks the shape law".format(extract.patch_rows))
    height, width, _ = extract.pixels.shape
    if height % P or width % P or width != 3 * P:
        errors.append("pixels {} are not patch multiples".format(extract.pixels.shape))
    tx_row, tx_col = extract.tx_pixel
    rx_row = tx_row - row_gap
    if not extract.pad_patches * P <= rx_row < (extract.pad_patches + 1) * P:
        errors.append("rx row {} is outside the padded rx patch row".format(rx_row))
    aligned = rotate_point(rx, tx.xy, extract.angle_rad)
    if abs(aligned.x - tx.x) > 1e-6 * max(1.0, d2):
        errors.append("rx is {:.3g} m off the tx column".format(aligned.x - tx.x))
    if abs((aligned.y - tx.y) / res - row_gap) > 0.5 + 1e-9:
        errors.append("rx row is {:.3g} px off".format((aligned.y - tx.y) / res - row_gap))
    return errors


def geometry_suite(seed=0, num_links=1000, num_rotations=5, links_per_rotation=10,
                   patch_size=9, size_px=256):
    rng = np.random.default_rng(seed)
    scenes = [generate_scene(size_px, size_px, seed=seed + i) for i in range(3)]
    failures = []
    for i in range(num_links):
        scene = scenes[i % len(scenes)]
        tx = random_free_point(rng, scene, 0.0, 9.0)
        rx = random_free_point(rng, scene, 0.0, 1.5)
        if distance_2d(tx, rx) == 0.0:
            continue
        pad = int(rng.integers(0, 3))
        extract = align_and_extract(scene, tx, rx, patch_size, pad)
        failures += extract_alignment_errors(scene, tx, rx, extract)
    checks = [Check("shape law and alignment", not failures,
                    "; ".join(failures[:3]) or "{} links".format(num_links))]

    foliage_diffs, mask_disagree, mask_total = [], 0, 0
    scene = scenes[0]
    center = (0.5 * scene.width_m, 0.5 * scene.height_m)
    inner = 0.12 * min(scene.width_m, scene.height_m)
    for _ in range(num_rotations):
        angle = float(rng.uniform(0.0, 2.0 * np.pi))
        rotated = rotate_scene(scene, angle, center)
        for _ in range(links_per_rotation):
            tx = random_free_point(rng, scene, 0.0, 9.0, center, inner)
            rx = random_free_point(rng, scene, 0.0, 1.5, tx.xy, inner)
            if distance_2d(tx, rx) < 1.0:
                continue
            a = align_and_extract(scene, tx, rx, patch_size)
            b = align_and_extract(rotated, rotate_point(tx, center, angle),
                                  rotate_point(rx, center, angle), patch_size)
            if a.pixels.shape != b.pixels.shape:
                mask_disagree += a.pixels[..., 0].size
                mask_total += a.pixels[..., 0].size
                continue
            foliage_diffs.append(np.mean(np.abs(a.pixels[..., 1] - b.pixels[..., 1])))
            mask_disagree += int(np.count_nonzero(a.pixels[..., 0] != b.pixels[..., 0]))
            mask_total += a.pixels[..., 0].size
    foliage_diff = float(np.mean(foliage_diffs)) if foliage_diffs else 0.0
    disagreement = mask_disagree / max(mask_total, 1)
    checks.append(Check("rotation invariance foliage", foliage_diff <= 0.05,
                        "mean abs diff {:.4f}".format(foliage_diff)))
    checks.append(Check("rotation invariance mask", disagreement <= 0.02,
                        "disagreement {:.4f}".format(disagreement)))
    return checks


def reflection_scene():
    """A 64 m scene where a block hides rx from tx and one wall reflects.

    The only valid ray from (10.5, 20.5) to (50.5, 20.5) reflects off the
    wall y = 40 at (30.5, 40).
    """
    scene = Scene.empty(64, 64, scene_id="reflection")
    scene.building_mask[10:31, 28:36] = 1
    scene.building_mask[40:51, 5:61] = 1
    scene.building_height_m[scene.building_mask == 1] = 20.0
    scene.validate()
    return scene


def canopy_scene():
    """A 64 m scene with a 10 m wide, 20 m tall foliage band at x in [20, 30)."""
    scene = Scene.empty(64, 64, scene_id="canopy")
    scene.foliage_height_m[:, 20:30] = 20.0
    scene.validate()
    return scene


def supersampled_los(scene, a, b, num_samples=10000):
    """Line of sight by testing num_samples evenly spaced interior points of
    the 2-D segment against the building mask."""
    n = num_samples + 2
    t = np.linspace(0.0, 1.0, n)[1:-1]
    x = a.x + t * (b.x - a.x)
    y = a.y + t * (b.y - a.y)
    cols = np.clip(np.floor(x / scene.resolution_m).astype(np.int64), 0, scene.width_px - 1)
    rows = np.clip(np.floor(y / scene.resolution_m).astype(np.int64), 0, scene.height_px - 1)
    return not np.any(scene.building_mask[rows, cols])


def wall_of(ray, walls):
    """The wall holding a reflected ray's reflection point."""
    point = ray.vertices[1]
    for wall in walls:
        along, across = (point.x, point.y) if wall.axis == "x" else (point.y, point.x)
        if abs(across - wall.coord_m) <= 1e-9 and wall.start_m <= along <= wall.end_m:
            return wall
    raise ValueError("no wall holds the reflection point {}".format(point))


def reflection_angle_error(ray, wall):
    """Largest deviation between a reflected ray's outgoing 2-D direction and
    its incoming direction mirrored across the wall."""
    tx, point, rx = ray.vertices
    incoming = np.array([point.x - tx.x, point.y - tx.y])
    outgoing = np.array([rx.x - point.x, rx.y - point.y])
    incoming /= np.linalg.norm(incoming)
    outgoing /= np.linalg.norm(outgoing)
    mirrored = incoming.copy()
    mirrored[1 if wall.axis == "x" else 0] *= -1.0
    return float(np.max(np.abs(mirrored - outgoing)))


def oracle_suite(seed=0, num_los_links=10000, num_fspl_links=200, num_reflection_links=50):
    cfg = OracleConfig()
    checks = []
    for d, expected in ((1.0, 61.39), (100.0, 101.39)):
        value = fspl_db(d, cfg.carrier_hz)
        checks.append(Check("fspl {:g} m".format(d), abs(value - expected) <= 0.01,
                            "{:.4f} dB".format(value)))

    scene = reflection_scene()
    tx, rx = Point3(10.5, 20.5, 9.0), Point3(50.5, 20.5, 1.5)
    result = path_loss(scene, tx, rx, cfg)
    ok = result is not None and not result.los \
        and result.pathloss_db == fspl_db(result.ray.length_m, cfg.carrier_hz) + 6.4
    checks.append(Check("single reflection", ok,
                        "outage" if result is None else "{:.4f} dB".format(result.pathloss_db)))

    loss = foliage_loss_db(canopy_scene(), (Point3(0.0, 10.5, 9.0), Point3(64.0, 10.5, 9.0)),
                           cfg)
    checks.append(Check("10 m canopy crossing", loss == 25.0, "{!r} dB".format(loss)))

    rng = np.random.default_rng(seed)
    empty = Scene.empty(128, 128)
    worst = 0.0
    for _ in range(num_fspl_links):
        a = random_free_point(rng, empty, 0.0, cfg.tx_height_m)
        b = random_free_point(rng, empty, 0.0, cfg.rx_height_m)
        result = path_loss(empty, a, b, cfg)
        worst = max(worst, abs(result.pathloss_db - fspl_db(distance_3d(a, b), cfg.carrier_hz)))
    checks.append(Check("open LOS equals fspl", worst <= 1e-9, "max diff {:.2e}".format(worst)))

    distances = np.sort(rng.uniform(1.0, 500.0, size=num_fspl_links))
    freqs = np.sort(rng.uniform(1e9, 1e11, size=num_fspl_links))
    increasing = np.all(np.diff(fspl_db(distances, cfg.carrier_hz)) > 0.0) \
        and np.all(np.diff(fspl_db(100.0, freqs)) > 0.0)
    checks.append(Check("fspl strictly increasing", bool(increasing),
                        "over {} distances and frequencies".format(num_fspl_links)))

    city = generate_scene(128, 128, seed=seed)
    agree = 0
    for _ in range(num_los_links):
        a = random_free_point(rng, city, 0.0, cfg.tx_height_m)
        b = random_free_point(rng, city, 0.0, cfg.rx_height_m)
        agree += los_clear(city, a, b) == supersampled_los(city, a, b)
    fraction = agree / num_los_links
    checks.append(Check("los_clear vs supersampling", fraction >= 0.999,
                        "agreement {:.4%}".format(fraction)))

    walls = extract_walls(city)
    worst, num_rays = 0.0, 0
    for _ in range(num_reflection_links):
        a = random_free_point(rng, city, 0.0, cfg.tx_height_m)
        b = random_free_point(rng, city, 0.0, cfg.rx_height_m)
        for ray in reflected_rays(city, a, b, walls=walls, cfg=cfg):
            worst = max(worst, reflection_angle_error(ray, wall_of(ray, walls)))
            num_rays += 1
    checks.append(Check("mirror law on reflected rays", num_rays > 0 and worst <= 1e-9,
                        "{} rays, max err {:.2e}".format(num_rays, worst)))
    return checks


SUITES = (("gradients", gradient_suite), ("geometry", geometry_suite), ("oracle", oracle_suite))


def run_selftest(names=None, seed=0):
    """Run the named suites, all by default, and return their SuiteResults."""
    results = []
    for name, suite in SUITES:
        if names is not None and name not in names:
            continue
        start = time.perf_counter()
        checks = suite(seed=seed)
        results.append(SuiteResult(name, tuple(checks), time.perf_counter() - start))
        logger.info("suite %s: %s", name, "pass" if results[-1].passed else "FAIL")
    return results
