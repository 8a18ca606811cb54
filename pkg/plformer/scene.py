"""Scenes, links, coordinates and the file formats shared by plformer, MIT License"""


import dataclasses
import datetime
import json
import logging
import pathlib

import numpy as np

from plformer.errors import SceneFormatError
from plformer.errors import ValidationError


logger = logging.getLogger(__name__)


SCENE_MAGIC = "PLSCENE"
SCENE_FORMAT_VERSION = 1
DATASET_FORMAT_VERSION = 1
SCENE_LAYERS = ("mask", "heights", "foliage")
SPLIT_NAMES = ("train", "val_known", "test_known", "val_novel", "test_novel")
NOVEL_SPLITS = ("val_novel", "test_novel")


@dataclasses.dataclass(frozen=True)
class Point3:
    """A point in the local Cartesian frame, meters, z above flat ground."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not np.all(np.isfinite([self.x, self.y, self.z])):
            raise ValidationError("point {} is not finite".format(self))
        if self.z < 0.0:
            raise ValidationError("point height must be >= 0, got {}".format(self.z))

    @property
    def xy(self):
        return np.array([self.x, self.y], dtype=np.float64)

    def as_array(self):
        return np.array([self.x, self.y, self.z], dtype=np.float64)

    def to_list(self):
        return [float(self.x), float(self.y), float(self.z)]

    @classmethod
    def from_sequence(cls, values):
        if len(values) != 3:
            raise ValidationError("expected [x, y, z], got {!r}".format(values))
        return cls(float(values[0]), float(values[1]), float(values[2]))


def distance_3d(a, b):
    """Euclidean distance between two points in meters.

    Args:
    - a: a Point3.
    - b: a Point3.

    Returns:
    - d: a non-negative float, zero iff a equals b.
    """
    return float(np.linalg.norm(a.as_array() - b.as_array()))


def distance_2d(a, b):
    return float(np.linalg.norm(a.xy - b.xy))


@dataclasses.dataclass(frozen=True, eq=False)
class Scene:
    """A rasterized urban map; row 0 of every grid is the minimum-y row.

    Grids have shape [height_px, width_px]. Pixel (row, col) covers
    x in [col, col + 1) * resolution_m and y in [row, row + 1) * resolution_m.
    """

    id: str
    width_px: int
    height_px: int
    resolution_m: float
    building_mask: np.ndarray
    building_height_m: np.ndarray
    foliage_height_m: np.ndarray
    foliage_max_m: float = 30.0

    @property
    def width_m(self):
        return self.width_px * self.resolution_m

    @property
    def height_m(self):
        return self.height_px * self.resolution_m

    def free_mask(self):
        return self.building_mask == 0

    def contains(self, point):
        return (0.0 <= point.x <= self.width_m) and (0.0 <= point.y <= self.height_m)

    def pixel_of(self, point):
        """Return the (row, col) pixel holding a point, edges clamped inward."""
        col = int(np.floor(point.x / self.resolution_m))
        row = int(np.floor(point.y / self.resolution_m))
        return (min(max(row, 0), self.height_px - 1),
                min(max(col, 0), self.width_px - 1))

    def building_coverage(self):
        return float(np.mean(self.building_mask))

    def validate(self):
        """Check every scene invariant, raising ValidationError on the first."""
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValidationError("scene dimensions must be positive, got {}x{}".format(
                self.width_px, self.height_px))
        if not self.resolution_m > 0.0 or not self.foliage_max_m > 0.0:
            raise ValidationError("resolution and foliage maximum must be positive")
        shape = (self.height_px, self.width_px)
        for name in ("building_mask", "building_height_m", "foliage_height_m"):
            grid = getattr(self, name)
            if grid.shape != shape:
                raise ValidationError("{} has shape {}, expected {}".format(
                    name, grid.shape, shape))
        _check_cells(self.building_mask, np.isin(self.building_mask, (0, 1)),
                     "mask value must be 0 or 1")
        _check_cells(self.building_height_m,
                     np.isfinite(self.building_height_m) & (self.building_height_m >= 0.0),
                     "building height must be finite and >= 0")
        _check_cells(self.foliage_height_m,
                     np.isfinite(self.foliage_height_m)
                     & (self.foliage_height_m >= 0.0)
                     & (self.foliage_height_m <= self.foliage_max_m),
                     "foliage height must lie in [0, {}]".format(self.foliage_max_m))
        _check_cells(self.building_height_m,
                     (self.building_height_m > 0.0) == (self.building_mask == 1),
                     "building height must be > 0 exactly where the mask is 1")
        _check_cells(self.foliage_height_m,
                     ~((self.foliage_height_m > 0.0) & (self.building_mask == 1)),
                     "foliage and building overlap")

    def equals(self, other):
        return (
            isinstance(other, Scene)
            and self.id == other.id
            and self.width_px == other.width_px
            and self.height_px == other.height_px
            and self.resolution_m == other.resolution_m
            and self.foliage_max_m == other.foliage_max_m
            and np.array_equal(self.building_mask, other.building_mask)
            and np.array_equal(self.building_height_m, other.building_height_m)
            and np.array_equal(self.foliage_height_m, other.foliage_height_m))

    @classmethod
    def empty(cls, width_px, height_px, scene_id="empty", resolution_m=1.0,
              foliage_max_m=30.0):
        shape = (height_px, width_px)
        return cls(
            id=scene_id, width_px=width_px, height_px=height_px,
            resolution_m=resolution_m,
            building_mask=np.zeros(shape, dtype=np.uint8),
            building_height_m=np.zeros(shape, dtype=np.float64),
            foliage_height_m=np.zeros(shape, dtype=np.float64),
            foliage_max_m=foliage_max_m)


def _check_cells(grid, ok, message):
    if not np.all(ok):
        row, col = np.argwhere(~ok)[0]
        raise ValidationError("{} at row {}, col {} (value {})".format(
            message, row, col, grid[row, col]))


def _format_real(value):
    return repr(float(value))


def format_grid_file(width_px, height_px, resolution_m, foliage_max_m, layers):
    """Render grids in the PLSCENE text format.

    Args:
    - width_px, height_px: grid dimensions.
    - resolution_m: meters per pixel.
    - foliage_max_m: foliage normalization height.
    - layers: an ordered list of (name, grid) pairs; `mask` grids are written
        as integers, every other grid with the shortest round-trip decimal.

    Returns:
    - text: the file content, newline terminated.
    """
    lines = [
        "{} {}".format(SCENE_MAGIC, SCENE_FORMAT_VERSION),
        "{} {} {} {}".format(width_px, height_px, _format_real(resolution_m),
                             _format_real(foliage_max_m)),
        "LAYERS " + " ".join(name for name, _ in layers)]
    for name, grid in layers:
        for row in np.asarray(grid).tolist():
            if name == "mask":
                lines.append(" ".join(str(int(v)) for v in row))
            else:
                lines.append(" ".join(_format_real(v) for v in row))
    return "\n".join(lines) + "\n"


def save_scene(scene, path):
    """Write a scene file; identical scenes always produce identical bytes.

    The file does not store scene.id: load_scene takes the id from the file
    name without suffix, so save under "<id>.plscene" to keep it.
    """
    scene.validate()
    text = format_grid_file(
        scene.width_px, scene.height_px, scene.resolution_m, scene.foliage_max_m,
        [("mask", scene.building_mask),
         ("heights", scene.building_height_m),
         ("foliage", scene.foliage_height_m)])
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    logger.debug("wrote scene %s to %s", scene.id, path)


def _parse_block(lines, first_line, width_px, height_px, integer):
    rows = []
    for offset in range(height_px):
        number = first_line + offset
        index = number - 1
        if index >= len(lines):
            raise SceneFormatError("unexpected end of file, expected {} more row(s)".format(
                height_px - offset), number)
        cells = lines[index].split(" ")
        if len(cells) != width_px:
            raise SceneFormatError("expected {} cells, got {}".format(
                width_px, len(cells)), number)
        try:
            values = [int(c) if integer else float(c) for c in cells]
        except ValueError:
            raise SceneFormatError("unreadable cell value in {!r}".format(lines[index]), number)
        rows.append(values)
    return rows


def _check_row_range(grid, first_line, ok, message):
    if not np.all(ok):
        row, col = np.argwhere(~ok)[0]
        raise SceneFormatError("{} at row {}, col {} (value {})".format(
            message, row, col, grid[row, col]), first_line + int(row))


def load_scene(path):
    """Read a scene file.

    Args:
    - path: a PLSCENE file; the scene id is the file name without suffix.

    Returns:
    - scene: a validated Scene, bit-identical to the one that was saved.
    """
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()

    header = lines[0].split(" ") if lines else []
    if header != [SCENE_MAGIC, str(SCENE_FORMAT_VERSION)]:
        raise SceneFormatError("expected header '{} {}'".format(
            SCENE_MAGIC, SCENE_FORMAT_VERSION), 1)
    if len(lines) < 3:
        raise SceneFormatError("missing dimension or layer line", len(lines) + 1)
    dims = lines[1].split(" ")
    try:
        width_px, height_px = int(dims[0]), int(dims[1])
        resolution_m, foliage_max_m = float(dims[2]), float(dims[3])
    except (ValueError, IndexError):
        raise SceneFormatError(
            "expected '<width_px> <height_px> <resolution_m> <foliage_max_m>'", 2)
    if len(dims) != 4 or width_px <= 0 or height_px <= 0:
        raise SceneFormatError("dimension mismatch in {!r}".format(lines[1]), 2)
    if not (resolution_m > 0.0 and foliage_max_m > 0.0):
        raise SceneFormatError("resolution and foliage maximum must be positive", 2)
    if lines[2].split(" ") != ["LAYERS"] + list(SCENE_LAYERS):
        raise SceneFormatError("expected 'LAYERS {}'".format(" ".join(SCENE_LAYERS)), 3)

    mask_line = 4
    heights_line = mask_line + height_px
    foliage_line = heights_line + height_px
    mask = np.array(_parse_block(lines, mask_line, width_px, height_px, True), dtype=np.int64)
    heights = np.array(_parse_block(lines, heights_line, width_px, height_px, False),
                       dtype=np.float64)
    foliage = np.array(_parse_block(lines, foliage_line, width_px, height_px, False),
                       dtype=np.float64)
    if len(lines) != foliage_line + height_px - 1:
        raise SceneFormatError("dimension mismatch: trailing rows after the foliage layer",
                               foliage_line + height_px)

    _check_row_range(mask, mask_line, np.isin(mask, (0, 1)), "mask value must be 0 or 1")
    _check_row_range(heights, heights_line, np.isfinite(heights) & (heights >= 0.0),
                     "building height must be finite and >= 0")
    _check_row_range(heights, heights_line, (heights > 0.0) == (mask == 1),
                     "building height must be > 0 exactly where the mask is 1")
    _check_row_range(foliage, foliage_line,
                     np.isfinite(foliage) & (foliage >= 0.0) & (foliage <= foliage_max_m),
                     "foliage height out of range [0, {}]".format(foliage_max_m))
    _check_row_range(foliage, foliage_line, ~((foliage > 0.0) & (mask == 1)),
                     "foliage and building overlap")

    return Scene(
        id=pathlib.Path(path).stem, width_px=width_px, height_px=height_px,
        resolution_m=resolution_m, building_mask=mask.astype(np.uint8),
        building_height_m=heights, foliage_height_m=foliage,
        foliage_max_m=foliage_max_m)


def load_scene_dir(directory):
    """Load every `*.plscene` file of a directory, keyed by scene id."""
    paths = sorted(pathlib.Path(directory).glob("*.plscene"))
    if not paths:
        raise ValidationError("no .plscene files in {}".format(directory))
    scenes = {}
    for path in paths:
        scene = load_scene(path)
        scenes[scene.id] = scene
    return scenes


@dataclasses.dataclass(frozen=True)
class LinkRecord:
    """One transmitter to receiver link with its ground-truth path loss."""

    scene_id: str
    tx: Point3
    rx: Point3
    distance_3d_m: float
    pathloss_db: float
    los: bool

    def validate(self, carrier_hz=28e9):
        from plformer.oracle import fspl_db

        expected = distance_3d(self.tx, self.rx)
        if abs(self.distance_3d_m - expected) > 1e-9 * max(expected, 1.0):
            raise ValidationError("link distance {} does not match endpoints ({})".format(
                self.distance_3d_m, expected))
        if self.pathloss_db < fspl_db(expected, carrier_hz) - 1e-6:
            raise ValidationError("path loss {} dB beats free space at {} m".format(
                self.pathloss_db, expected))

    def to_json(self):
        return json.dumps({
            "scene_id": self.scene_id,
            "tx": self.tx.to_list(),
            "rx": self.rx.to_list(),
            "distance_3d_m": float(self.distance_3d_m),
            "pathloss_db": float(self.pathloss_db),
            "los": bool(self.los)})

    @classmethod
    def from_json(cls, line):
        data = json.loads(line)
        return cls(
            scene_id=str(data["scene_id"]),
            tx=Point3.from_sequence(data["tx"]),
            rx=Point3.from_sequence(data["rx"]),
            distance_3d_m=float(data["distance_3d_m"]),
            pathloss_db=float(data["pathloss_db"]),
            los=bool(data["los"]))


@dataclasses.dataclass(frozen=True)
class DatasetSplit:
    name: str
    records: tuple

    def __post_init__(self):
        if self.name not in SPLIT_NAMES:
            raise ValidationError("unknown split name {!r}, expected one of {}".format(
                self.name, ", ".join(SPLIT_NAMES)))

    def scene_ids(self):
        return {record.scene_id for record in self.records}

    def __len__(self):
        return len(self.records)


def check_disjoint(splits):
    """Novel-split scene ids must not appear in train or known splits."""
    known = set()
    novel = set()
    for split in splits.values():
        (novel if split.name in NOVEL_SPLITS else known).update(split.scene_ids())
    shared = known & novel
    if shared:
        raise ValidationError("scene(s) {} appear in both known and novel splits".format(
            ", ".join(sorted(shared))))


def write_dataset(records, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for record in records:
            f.write(record.to_json())
            f.write("\n")


def read_dataset(path):
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                records.append(LinkRecord.from_json(line))
            except (ValueError, KeyError, TypeError) as e:
                raise ValidationError("{}:{}: malformed link record ({})".format(
                    path, number, e))
    return records


def metadata_path(path):
    return str(path) + ".meta.json"


def write_metadata(path, metadata, timestamp=True):
    """Write the JSON sidecar of a primary output file.

    Timestamps live only here, never in primary outputs.
    """
    metadata = dict(metadata)
    if timestamp:
        metadata["created"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    with open(metadata_path(path), "w", encoding="utf-8", newline="\n") as f:
        json.dump(metadata, f, indent=2, sort_keys=True)
        f.write("\n")


def read_metadata(path):
    with open(metadata_path(path), "r", encoding="utf-8") as f:
        return json.load(f)


def write_predictions(path, rows):
    """Write a prediction file.

    Args:
    - path: the output JSON-lines file.
    - rows: an iterable of (link_index, scene_id, predicted_db) triples.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for link, scene_id, predicted_db in rows:
            f.write(json.dumps({
                "link": int(link),
                "scene_id": str(scene_id),
                "predicted_db": float(predicted_db)}))
            f.write("\n")


def read_predictions(path):
    """Read a prediction file into a dict link index -> (scene_id, dB)."""
    predictions = {}
    with open(path, "r", encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
                link = int(data["link"])
                value = (str(data["scene_id"]), float(data["predicted_db"]))
            except (ValueError, KeyError, TypeError) as e:
                raise ValidationError("{}:{}: malformed prediction ({})".format(
                    path, number, e))
            if link in predictions:
                raise ValidationError("{}:{}: duplicate link id {}".format(path, number, link))
            predictions[link] = value
    return predictions
