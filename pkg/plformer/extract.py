"""Transmitter-aligned, patch-aligned map extracts for the surrogate, MIT License"""


import dataclasses
import json

import numpy as np
from scipy import ndimage

from plformer.errors import ValidationError
from plformer.oracle import thread_map
from plformer.scene import Point3
from plformer.scene import Scene
from plformer.scene import distance_3d
from plformer.scene import format_grid_file


PATCH_COLS = 3
MASK_CHANNEL = 0
FOLIAGE_CHANNEL = 1


@dataclasses.dataclass(frozen=True, eq=False)
class MapExtract:
    """A rotated, cropped map around one link, rows top-down with rx above tx.

    pixels has shape [patch_rows * patch_size, patch_cols * patch_size, 2]
    with the building mask in channel 0 and the normalized foliage height
    in channel 1.
    """

    pixels: np.ndarray
    patch_rows: int
    patch_cols: int
    patch_size: int
    distance_m: float
    tx_patch_index: tuple
    angle_rad: float = 0.0
    pad_patches: int = 1

    @property
    def shape(self):
        return self.pixels.shape

    @property
    def tx_pixel(self):
        half = (self.patch_size - 1) // 2
        row, col = self.tx_patch_index
        return (row * self.patch_size + half, col * self.patch_size + half)

    def validate(self):
        P = self.patch_size
        expected = (self.patch_rows * P, self.patch_cols * P, 2)
        if self.pixels.shape != expected:
            raise ValidationError("extract pixels have shape {}, expected {}".format(
                self.pixels.shape, expected))
        if self.patch_cols != PATCH_COLS:
            raise ValidationError("extract must have {} patch columns, got {}".format(
                PATCH_COLS, self.patch_cols))
        if not np.all(np.isin(self.pixels[..., MASK_CHANNEL], (0.0, 1.0))):
            raise ValidationError("mask channel must be binary")
        foliage = self.pixels[..., FOLIAGE_CHANNEL]
        if np.any(foliage < 0.0) or np.any(foliage > 1.0):
            raise ValidationError("foliage channel must lie in [0, 1]")


def _rotation(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def sample_scene(scene, xs, ys):
    """Bilinear samples of both scene channels at metric points.

    Args:
    - scene: the Scene to sample.
    - xs, ys: arrays of equal shape with metric coordinates.

    Returns:
    - mask: the building mask interpolated then thresholded at 0.5.
    - foliage: the interpolated foliage height in meters.
        Samples outside the scene read as open space.
    """
    res = scene.resolution_m
    coords = np.stack([np.asarray(ys) / res - 0.5, np.asarray(xs) / res - 0.5])
    mask = ndimage.map_coordinates(
        scene.building_mask.astype(np.float64), coords,
        order=1, mode="grid-constant", cval=0.0)
    foliage = ndimage.map_coordinates(
        scene.foliage_height_m, coords, order=1, mode="grid-constant", cval=0.0)
    return (mask >= 0.5).astype(np.float64), np.clip(foliage, 0.0, scene.foliage_max_m)


def rotate_map(scene, center, angle):
    """Rotate a scene counter-clockwise around a point by inverse mapping.

    Args:
    - scene: the Scene to rotate.
    - center: an (x, y) pair in meters.
    - angle: the rotation in radians.

    Returns:
    - grid: an array [height_px, width_px, 2] with the binary building mask
        and the foliage height in meters, on the scene's own pixel grid.
    """
    if not np.isfinite(angle):
        raise ValidationError("rotation angle must be finite, got {}".format(angle))
    res = scene.resolution_m
    rows, cols = np.mgrid[0:scene.height_px, 0:scene.width_px]
    q = np.stack([(cols + 0.5) * res - center[0], (rows + 0.5) * res - center[1]])
    p = np.tensordot(_rotation(-angle), q, axes=1)
    mask, foliage = sample_scene(scene, p[0] + center[0], p[1] + center[1])
    return np.stack([mask, foliage], axis=-1)


def extract_shape(row_gap, patch_size, pad_patches):
    """Patch rows of an extract whose receiver lies row_gap pixels above tx."""
    half = (patch_size - 1) // 2
    rx_patches_above = -((half - row_gap) // patch_size)
    return 2 * pad_patches + 1 + rx_patches_above


def align_and_extract(scene, tx, rx, P, pad_patches=1):
    """Rotate the map around tx so rx lies straight above it, then crop.

    Args:
    - scene: the Scene to extract from.
    - tx, rx: the link endpoints as Point3.
    - P: the odd patch size in pixels.
    - pad_patches: extra patch rows below the tx patch and above the rx
        patch; one patch column always pads each side of the tx/rx column.

    Returns:
    - extract: a MapExtract; the tx pixel is the center of its patch, the
        patch grid is anchored at tx and the receiver is not re-centered.
    """
    if P < 1 or P % 2 == 0:
        raise ValidationError("patch size must be odd and positive, got {}".format(P))
    if pad_patches < 0:
        raise ValidationError("pad_patches must be >= 0, got {}".format(pad_patches))
    delta = rx.xy - tx.xy
    d2 = float(np.hypot(delta[0], delta[1]))
    if d2 == 0.0:
        raise ValidationError("transmitter and receiver coincide in 2-D at ({}, {})".format(
            tx.x, tx.y))
    res = scene.resolution_m
    row_gap = int(np.floor(d2 / res + 0.5))
    R = extract_shape(row_gap, P, pad_patches)
    half = (P - 1) // 2
    tx_patch = (R - 1 - pad_patches, PATCH_COLS // 2)
    tx_row = tx_patch[0] * P + half
    tx_col = tx_patch[1] * P + half

    forward = delta / d2
    right = np.array([forward[1], -forward[0]])
    rows, cols = np.mgrid[0:R * P, 0:PATCH_COLS * P]
    up = (tx_row - rows).astype(np.float64) * res
    across = (cols - tx_col).astype(np.float64) * res
    xs = tx.x + up * forward[0] + across * right[0]
    ys = tx.y + up * forward[1] + across * right[1]
    mask, foliage = sample_scene(scene, xs, ys)
    pixels = np.stack([mask, foliage / scene.foliage_max_m], axis=-1)

    return MapExtract(
        pixels=pixels, patch_rows=R, patch_cols=PATCH_COLS, patch_size=P,
        distance_m=distance_3d(tx, rx), tx_patch_index=tx_patch,
        angle_rad=float(np.pi / 2 - np.arctan2(forward[1], forward[0])),
        pad_patches=pad_patches)


def batch_extract(scenes, records, P, pad_patches=1, threads=1):
    """Extract the model input of every link record.

    Args:
    - scenes: a dict mapping scene id to Scene.
    - records: a list of LinkRecord.

    Returns:
    - extracts: a list of MapExtract in record order.
    """
    missing = sorted({record.scene_id for record in records} - set(scenes))
    if missing:
        raise ValidationError("records reference unknown scene(s): {}".format(
            ", ".join(missing)))
    return thread_map(
        lambda record: align_and_extract(
            scenes[record.scene_id], record.tx, record.rx, P, pad_patches),
        records, threads)


def dump_extract(extract, prefix):
    """Write an extract as a two-layer grid file plus a JSON sidecar.

    The grid file keeps the scene convention (first row is the minimum-y,
    transmitter-side row); foliage stays normalized.
    """
    height, width, _ = extract.pixels.shape
    text = format_grid_file(
        width, height, 1.0, 1.0,
        [("mask", extract.pixels[::-1, :, MASK_CHANNEL].astype(np.int64)),
         ("foliage", extract.pixels[::-1, :, FOLIAGE_CHANNEL])])
    with open(prefix + ".plscene", "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    with open(prefix + ".json", "w", encoding="utf-8", newline="\n") as f:
        json.dump({
            "R": extract.patch_rows,
            "C": extract.patch_cols,
            "P": extract.patch_size,
            "distance_m": extract.distance_m,
            "angle_rad": extract.angle_rad,
            "pad_patches": extract.pad_patches,
            "tx_patch_index": list(extract.tx_patch_index)}, f, indent=2, sort_keys=True)
        f.write("\n")


def rotate_point(point, center, angle):
    """Rotate a Point3 counter-clockwise around an (x, y) center."""
    x, y = _rotation(angle) @ (point.xy - np.asarray(center, dtype=np.float64))
    return Point3(float(x + center[0]), float(y + center[1]), point.z)


def rotate_scene(scene, angle, center=None):
    """A Scene holding the rotated mask and foliage of another.

    Building heights are flattened to the tallest building; the 2-D oracle
    and the extracts never read them.
    """
    if center is None:
        center = (0.5 * scene.width_m, 0.5 * scene.height_m)
    grid = rotate_map(scene, center, angle)
    mask = grid[..., MASK_CHANNEL].astype(np.uint8)
    tallest = max(float(scene.building_height_m.max()), 1.0)
    return Scene(
        id=scene.id, width_px=scene.width_px, height_px=scene.height_px,
        resolution_m=scene.resolution_m, building_mask=mask,
        building_height_m=np.where(mask == 1, tallest, 0.0),
        foliage_height_m=np.where(mask == 1, 0.0, grid[..., FOLIAGE_CHANNEL]),
        foliage_max_m=scene.foliage_max_m)
