"""Dense radio maps around one transmitter, MIT License"""


import dataclasses
import json
import logging

import matplotlib.pyplot as plt
import numpy as np

from plformer.baselines import GppConfig
from plformer.baselines import gpp_umi_pathloss
from plformer.errors import ValidationError
from plformer.extract import align_and_extract
from plformer.extract import sample_scene
from plformer.oracle import OracleConfig
from plformer.oracle import los_clear
from plformer.oracle import path_loss
from plformer.oracle import thread_map
from plformer.scene import Point3
from plformer.scene import distance_2d
from plformer.scene import distance_3d
from plformer.transformer import predict


logger = logging.getLogger(__name__)


CLAMP_DB = (60.0, 160.0)


class OraclePredictor:
    name = "oracle"
    reads_off_scene = False

    def __init__(self, cfg=None, threads=1):
        self.cfg = cfg or OracleConfig()
        self.threads = threads

    def predict(self, scene, tx, receivers):
        def one(rx):
            result = path_loss(scene, tx, rx, self.cfg)
            return np.inf if result is None else result.pathloss_db
        return np.array(thread_map(one, receivers, self.threads), dtype=np.float64)


class SurrogatePredictor:
    """The surrogate on extracts of every receiver; extracts read open ground
    outside the scene, so receivers past the scene edge get predictions too."""

    name = "surrogate"
    reads_off_scene = True

    def __init__(self, model, pad_patches=None, batch_size=64, threads=1):
        self.model = model
        self.pad_patches = model.pad_patches if pad_patches is None else pad_patches
        self.batch_size = batch_size
        self.threads = threads

    def predict(self, scene, tx, receivers):
        P = self.model.model_config.patch_size
        extracts = thread_map(
            lambda rx: align_and_extract(scene, tx, rx, P, self.pad_patches),
            receivers, self.threads)
        return predict(self.model, extracts, self.batch_size)


class GppPredictor:
    """The 3GPP baseline with the LOS flag traced on the scene."""

    name = "3gpp"
    reads_off_scene = False

    def __init__(self, cfg=None):
        self.cfg = cfg or GppConfig()

    def predict(self, scene, tx, receivers):
        d2d = np.array([distance_2d(tx, rx) for rx in receivers])
        d3d = np.array([max(distance_3d(tx, rx), 1.0) for rx in receivers])
        los = np.array([los_clear(scene, tx, rx) for rx in receivers], dtype=bool)
        return np.atleast_1d(gpp_umi_pathloss(np.minimum(d2d, d3d), d3d, self.cfg, los))


class MlpPredictor:
    name = "distance-mlp"
    reads_off_scene = False

    def __init__(self, mlp):
        self.mlp = mlp

    def predict(self, scene, tx, receivers):
        d3d = np.array([distance_3d(tx, rx) for rx in receivers])
        los = np.array([los_clear(scene, tx, rx) for rx in receivers], dtype=bool)
        return self.mlp.predict_links(d3d, los)


@dataclasses.dataclass(frozen=True, eq=False)
class RadioMap:
    """Predicted path loss on a square grid centered on the transmitter.

    values[row, col] covers the pixel centered at (x_m[col], y_m[row]);
    row 0 is the minimum-y row. Masked pixels hold NaN and outages +inf.
    """

    values: np.ndarray
    x_m: np.ndarray
    y_m: np.ndarray
    tx: Point3
    extent_m: float
    resolution_m: float
    predictor: str

    @property
    def masked(self):
        return np.isnan(self.values)


def render_radiomap(scene, tx, predictor, resolution_m=None, extent_m=200.0,
                    rx_height_m=1.5):
    """Predict path loss at the center of every pixel around tx.

    Args:
    - scene: the Scene.
    - tx: the transmitter Point3, at the center of the map.
    - predictor: an object with predict(scene, tx, receivers).
    - resolution_m: the map pixel size; defaults to the scene resolution.
    - extent_m: the side length of the square map.

    Returns:
    - radiomap: a RadioMap; building pixels and the pixel under the
        transmitter are masked. Pixels outside the scene are predicted when
        the predictor reads_off_scene, padded with open ground like any
        extract, and masked otherwise.
    """
    resolution_m = resolution_m or scene.resolution_m
    if resolution_m <= 0.0 or extent_m <= 0.0:
        raise ValidationError("resolution and extent must be positive")
    n = int(np.floor(extent_m / resolution_m + 0.5))
    if n < 1:
        raise ValidationError("extent {} m is smaller than one {} m pixel".format(
            extent_m, resolution_m))
    if not scene.contains(tx):
        raise ValidationError("transmitter ({}, {}) lies outside scene {}".format(
            tx.x, tx.y, scene.id))
    row, col = scene.pixel_of(tx)
    if scene.building_mask[row, col]:
        raise ValidationError("transmitter ({}, {}) lies inside a building".format(tx.x, tx.y))

    offsets = (np.arange(n) + 0.5) * resolution_m - 0.5 * n * resolution_m
    x_m = tx.x + offsets
    y_m = tx.y + offsets
    values = np.full((n, n), np.nan)
    off_scene = getattr(predictor, "reads_off_scene", False)
    cells, receivers = [], []
    for i, y in enumerate(y_m.tolist()):
        for j, x in enumerate(x_m.tolist()):
            rx = Point3(x, y, rx_height_m)
            if distance_2d(tx, rx) == 0.0:
                continue
            if not scene.contains(rx):
                if not off_scene:
                    continue
            elif scene.building_mask[scene.pixel_of(rx)]:
                continue
            cells.append((i, j))
            receivers.append(rx)
    if receivers:
        predicted = predictor.predict(scene, tx, receivers)
        rows, cols = zip(*cells)
        values[list(rows), list(cols)] = predicted
    logger.info("rendered %d x %d map with %s, %d pixels masked", n, n, predictor.name,
                int(np.count_nonzero(np.isnan(values))))
    return RadioMap(values=values, x_m=x_m, y_m=y_m, tx=tx, extent_m=float(extent_m),
                    resolution_m=float(resolution_m), predictor=predictor.name)


def to_gray(values, clamp=CLAMP_DB):
    """8-bit gray levels, low loss bright; masked pixels are black."""
    lo, hi = clamp
    gray = np.zeros(values.shape, dtype=np.uint8)
    valid = ~np.isnan(values)
    clipped = np.clip(values[valid], lo, hi)
    gray[valid] = np.floor(255.0 * (hi - clipped) / (hi - lo) + 0.5).astype(np.uint8)
    return gray


def overlay_rgb(radiomap, scene, clamp=CLAMP_DB):
    """Prediction in blue, foliage in green, buildings black, masked off-scene white."""
    xs, ys = np.meshgrid(radiomap.x_m, radiomap.y_m)
    buildings, foliage = sample_scene(scene, xs, ys)
    inside = (xs >= 0.0) & (xs <= scene.width_m) & (ys >= 0.0) & (ys <= scene.height_m)
    rgb = np.zeros(radiomap.values.shape + (3,))
    rgb[..., 2] = to_gray(radiomap.values, clamp) / 255.0
    rgb[..., 1] = 0.8 * foliage / scene.foliage_max_m
    rgb[buildings > 0.0] = 0.0
    rgb[~inside & radiomap.masked] = 1.0
    return rgb


def write_radiomap(radiomap, scene, prefix, clamp=CLAMP_DB):
    """Write the CSV grid, the P5 PGM, the overlay PNG and a JSON sidecar.

    Image rows and CSV rows run from the maximum-y row down, north up.
    """
    values = radiomap.values[::-1]
    with open(prefix + ".csv", "w", encoding="utf-8", newline="\n") as f:
        for row in values.tolist():
            f.write(",".join(repr(value) for value in row))
            f.write("\n")

    gray = to_gray(values, clamp)
    with open(prefix + ".pgm", "wb") as f:
        f.write("P5\n{} {}\n255\n".format(gray.shape[1], gray.shape[0]).encode("ascii"))
        f.write(gray.tobytes())

    plt.imsave(prefix + "_overlay.png", overlay_rgb(radiomap, scene, clamp)[::-1],
               format="png", metadata={"Software": None})

    with open(prefix + ".json", "w", encoding="utf-8", newline="\n") as f:
        json.dump({
            "scene_id": scene.id,
            "tx": radiomap.tx.to_list(),
            "extent_m": radiomap.extent_m,
            "resolution_m": radiomap.resolution_m,
            "size_px": list(radiomap.values.shape),
            "clamp_db": list(clamp),
            "predictor": radiomap.predictor,
            "row_order": "max_y_first",
            "masked": "nan",
            "outage": "inf"}, f, indent=2, sort_keys=True)
        f.write("\n")
