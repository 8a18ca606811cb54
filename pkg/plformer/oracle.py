"""Procedural scenes and a single-reflection ray oracle for path loss, MIT License"""


from concurrent import futures
import dataclasses
import logging
import typing
import weakref

import numpy as np
from scipy import constants

from plformer.errors import OutOfBoundsError
from plformer.errors import SceneGenerationError
from plformer.errors import ValidationError
from plformer.scene import DATASET_FORMAT_VERSION
from plformer.scene import LinkRecord
from plformer.scene import Point3
from plformer.scene import Scene
from plformer.scene import distance_2d
from plformer.scene import distance_3d


logger = logging.getLogger(__name__)


SPEED_OF_LIGHT = constants.speed_of_light


@dataclasses.dataclass(frozen=True)
class OracleConfig:
    carrier_hz: float = 28e9
    tx_height_m: float = 9.0
    rx_height_m: float = 1.5
    reflection_loss_db: float = 6.4
    foliage_rate_db_per_m: float = 2.5
    canopy_fraction: float = 0.75
    max_pathloss_db: float = 160.0
    seed: int = 0

    def validate(self):
        for name in ("carrier_hz", "tx_height_m", "rx_height_m", "reflection_loss_db",
                     "foliage_rate_db_per_m", "canopy_fraction", "max_pathloss_db"):
            if not getattr(self, name) > 0.0:
                raise ValidationError("{} must be positive, got {}".format(
                    name, getattr(self, name)))
        if self.canopy_fraction > 1.0:
            raise ValidationError("canopy_fraction must be <= 1, got {}".format(
                self.canopy_fraction))
        if self.seed < 0:
            raise ValidationError("seed must be unsigned, got {}".format(self.seed))


@dataclasses.dataclass(frozen=True)
class SceneGenParams:
    building_coverage: float = 0.28
    building_size_px: typing.Tuple[int, int] = (12, 48)
    street_gap_px: int = 6
    building_height_m: typing.Tuple[float, float] = (12.0, 60.0)
    foliage_coverage: float = 0.08
    foliage_radius_px: typing.Tuple[float, float] = (3.0, 9.0)
    foliage_height_m: typing.Tuple[float, float] = (4.0, 30.0)
    max_attempts: int = 4000

    def validate(self):
        if not (0.0 <= self.building_coverage < 1.0 and 0.0 <= self.foliage_coverage < 1.0):
            raise ValidationError("coverage targets must lie in [0, 1)")
        for name in ("building_size_px", "building_height_m", "foliage_radius_px",
                     "foliage_height_m"):
            bounds = tuple(getattr(self, name))
            if len(bounds) != 2 or not 0 < bounds[0] <= bounds[1]:
                raise ValidationError("{} must be an increasing positive range, got {}".format(
                    name, getattr(self, name)))
        if self.street_gap_px < 6:
            raise ValidationError("street_gap_px must be >= 6, got {}".format(
                self.street_gap_px))

    def scaled(self, density):
        """Scale both coverage targets; density 0 gives an empty scene."""
        return dataclasses.replace(
            self, building_coverage=self.building_coverage * density,
            foliage_coverage=self.foliage_coverage * density)

    @classmethod
    def with_density(cls, density):
        return cls().scaled(density)


@dataclasses.dataclass(frozen=True)
class Ray:
    vertices: tuple
    length_m: float
    los: bool
    base_loss_db: float
    foliage_loss_db: float = 0.0

    @property
    def total_loss_db(self):
        return self.base_loss_db + self.foliage_loss_db

    def segments(self):
        return list(zip(self.vertices[:-1], self.vertices[1:]))


@dataclasses.dataclass(frozen=True)
class Wall:
    """An exterior building wall, a maximal axis-aligned boundary run.

    axis is "x" for walls running along x (constant y = coord_m) and "y"
    for walls running along y (constant x = coord_m); normal is +1 or -1,
    pointing from the building into open space along the constant axis.
    """

    axis: str
    coord_m: float
    start_m: float
    end_m: float
    normal: int


@dataclasses.dataclass(frozen=True)
class PathLossResult:
    pathloss_db: float
    los: bool
    ray: Ray


def fspl_db(d_m, f_hz):
    """Free-space path loss 20 log10(4 pi d f / c) in dB.

    Args:
    - d_m: a positive distance in meters, scalar or array.
    - f_hz: a positive frequency in Hz, scalar or array.

    Returns:
    - loss: a float for scalar inputs, otherwise an array.
    """
    d = np.asarray(d_m, dtype=np.float64)
    f = np.asarray(f_hz, dtype=np.float64)
    if not (np.all(d > 0.0) and np.all(f > 0.0)):
        raise ValidationError("fspl_db needs positive distance and frequency")
    loss = 20.0 * np.log10(4.0 * np.pi * d * f / SPEED_OF_LIGHT)
    return float(loss) if loss.ndim == 0 else loss


def generate_scene(width_px, height_px, gen_params=None, seed=0, scene_id=None,
                   resolution_m=1.0, foliage_max_m=30.0):
    """Generate a procedural urban scene.

    Args:
    - width_px, height_px: the scene size, both at least 64.
    - gen_params: a SceneGenParams, defaults when None.
    - seed: an unsigned integer; equal seeds give bit-identical scenes.
    - scene_id: the id of the scene, defaults to "scene-<seed>".

    Returns:
    - scene: a validated Scene with rectangular buildings separated by
        streets of at least street_gap_px and circular foliage blobs.
    """
    params = gen_params or SceneGenParams()
    params.validate()
    if width_px < 64 or height_px < 64:
        raise SceneGenerationError("scene must be at least 64x64 px, got {}x{}".format(
            width_px, height_px))
    rng = np.random.default_rng(seed)
    shape = (height_px, width_px)
    mask = np.zeros(shape, dtype=np.uint8)
    heights = np.zeros(shape, dtype=np.float64)
    foliage = np.zeros(shape, dtype=np.float64)

    ########################################
    # Place buildings separated by streets #
    ########################################

    if params.building_coverage > 0.0:
        lo, hi = params.building_size_px
        if lo > width_px or lo > height_px:
            raise SceneGenerationError(
                "smallest building ({} px) does not fit a {}x{} scene".format(
                    lo, width_px, height_px))
        gap = params.street_gap_px
        blocked = np.zeros(shape, dtype=bool)
        target = params.building_coverage * width_px * height_px
        covered = 0
        for _ in range(params.max_attempts):
            if covered >= target:
                break
            w = min(int(rng.integers(lo, hi + 1)), width_px)
            h = min(int(rng.integers(lo, hi + 1)), height_px)
            c0 = int(rng.integers(0, width_px - w + 1))
            r0 = int(rng.integers(0, height_px - h + 1))
            height = float(rng.uniform(*params.building_height_m))
            if blocked[r0:r0 + h, c0:c0 + w].any():
                continue
            mask[r0:r0 + h, c0:c0 + w] = 1
            heights[r0:r0 + h, c0:c0 + w] = height
            blocked[max(r0 - gap, 0):r0 + h + gap, max(c0 - gap, 0):c0 + w + gap] = True
            covered += w * h

    #######################################
    # Grow foliage blobs in open space    #
    #######################################

    if params.foliage_coverage > 0.0:
        rows, cols = np.mgrid[0:height_px, 0:width_px]
        centers_y = rows + 0.5
        centers_x = cols + 0.5
        target = params.foliage_coverage * width_px * height_px
        h_lo, h_hi = params.foliage_height_m
        h_hi = min(h_hi, foliage_max_m)
        for _ in range(params.max_attempts):
            if np.count_nonzero(foliage) >= target:
                break
            radius = float(rng.uniform(*params.foliage_radius_px))
            cx = float(rng.uniform(0.0, width_px))
            cy = float(rng.uniform(0.0, height_px))
            height = float(rng.uniform(min(h_lo, h_hi), h_hi))
            r0, r1 = max(int(cy - radius) - 1, 0), min(int(cy + radius) + 2, height_px)
            c0, c1 = max(int(cx - radius) - 1, 0), min(int(cx + radius) + 2, width_px)
            disk = ((centers_x[r0:r1, c0:c1] - cx) ** 2
                    + (centers_y[r0:r1, c0:c1] - cy) ** 2) <= radius ** 2
            disk &= mask[r0:r1, c0:c1] == 0
            window = foliage[r0:r1, c0:c1]
            window[disk] = np.maximum(window[disk], height)

    scene = Scene(
        id=scene_id if scene_id is not None else "scene-{}".format(seed),
        width_px=width_px, height_px=height_px, resolution_m=resolution_m,
        building_mask=mask, building_height_m=heights, foliage_height_m=foliage,
        foliage_max_m=foliage_max_m)
    scene.validate()
    logger.debug("generated %s: building coverage %.3f, foliage pixels %d",
                 scene.id, scene.building_coverage(), np.count_nonzero(foliage))
    return scene


def _check_in_bounds(scene, *points):
    for point in points:
        if not scene.contains(point):
            raise OutOfBoundsError("point ({}, {}) lies outside scene {} ({} x {} m)".format(
                point.x, point.y, scene.id, scene.width_m, scene.height_m))


def grid_walk(scene, a, b):
    """Walk the pixels whose interior the 2-D projection of a segment crosses.

    The segment is cut at every pixel-grid line it crosses; each piece lies
    inside exactly one pixel, identified from its midpoint. Pieces that run
    along a grid line touch only pixel boundaries and are dropped.

    Args:
    - scene: the Scene whose pixel grid is walked.
    - a, b: the segment endpoints as Point3.

    Returns:
    - t0, t1: arrays with the segment parameter range of every piece.
    - rows, cols: arrays with the pixel of every piece.
    """
    res = scene.resolution_m
    p0 = a.xy / res
    d = b.xy / res - p0
    for axis in (0, 1):
        if d[axis] == 0.0 and p0[axis] == np.floor(p0[axis]):
            empty = np.zeros(0)
            return empty, empty, empty.astype(np.int64), empty.astype(np.int64)

    cuts = [np.array([0.0, 1.0])]
    for axis in (0, 1):
        if d[axis] != 0.0:
            lo, hi = sorted((p0[axis], p0[axis] + d[axis]))
            lines = np.arange(np.ceil(lo), np.floor(hi) + 1.0)
            cuts.append((lines - p0[axis]) / d[axis])
    t = np.unique(np.concatenate(cuts))
    t = t[(t >= 0.0) & (t <= 1.0)]
    t0, t1 = t[:-1], t[1:]
    mid = 0.5 * (t0 + t1)
    cols = np.floor(p0[0] + mid * d[0]).astype(np.int64)
    rows = np.floor(p0[1] + mid * d[1]).astype(np.int64)
    cols = np.clip(cols, 0, scene.width_px - 1)
    rows = np.clip(rows, 0, scene.height_px - 1)
    return t0, t1, rows, cols


def los_clear(scene, a, b):
    """True iff the 2-D projection of segment a-b crosses no building pixel."""
    _check_in_bounds(scene, a, b)
    _, _, rows, cols = grid_walk(scene, a, b)
    return not np.any(scene.building_mask[rows, cols])


def foliage_loss_db(scene, segment, cfg):
    """Foliage attenuation along one straight segment.

    Args:
    - scene: the Scene holding foliage heights.
    - segment: a (Point3, Point3) pair.
    - cfg: an OracleConfig with the loss rate and canopy fraction.

    Returns:
    - loss: rate times the 3-D length of the sub-segments inside a canopy
        zone, i.e. over a foliage pixel of height h with the segment height
        z between (1 - canopy_fraction) * h and h.
    """
    a, b = segment
    _check_in_bounds(scene, a, b)
    t0, t1, rows, cols = grid_walk(scene, a, b)
    h = scene.foliage_height_m[rows, cols]
    keep = h > 0.0
    if not np.any(keep):
        return 0.0
    t0, t1, h = t0[keep], t1[keep], h[keep]
    base = (1.0 - cfg.canopy_fraction) * h
    dz = b.z - a.z
    if dz == 0.0:
        inside = (a.z >= base) & (a.z <= h)
        start, end = t0[inside], t1[inside]
    else:
        ta = (base - a.z) / dz
        tb = (h - a.z) / dz
        start = np.maximum(t0, np.minimum(ta, tb))
        end = np.minimum(t1, np.maximum(ta, tb))
        inside = end > start
        start, end = start[inside], end[inside]
    if start.size == 0:
        return 0.0

    # merge touching pieces so a straight run through canopy sums exactly
    total = 0.0
    run_start, run_end = start[0], end[0]
    for s, e in zip(start[1:], end[1:]):
        if s == run_end:
            run_end = e
        else:
            total += run_end - run_start
            run_start, run_end = s, e
    total += run_end - run_start
    return float(cfg.foliage_rate_db_per_m * distance_3d(a, b) * total)


def extract_walls(scene):
    """Extract exterior walls as maximal axis-aligned runs of the mask boundary.

    Returns:
    - walls: a list of Wall, horizontal walls first, each group ordered by
        line coordinate then span start.
    """
    res = scene.resolution_m
    padded = np.pad(scene.building_mask.astype(np.int8), 1)
    walls = []
    for axis in ("x", "y"):
        grid = padded if axis == "x" else padded.T
        for k in range(grid.shape[0] - 1):
            # building on the low side of the line gives an outward normal of +1
            normal = (grid[k, 1:-1] - grid[k + 1, 1:-1]).astype(np.int64)
            edges = np.flatnonzero(np.diff(np.concatenate(([0], normal, [0]))))
            for start, end in zip(edges[:-1], edges[1:]):
                if normal[start] != 0:
                    walls.append(Wall(axis=axis, coord_m=k * res, start_m=start * res,
                                      end_m=end * res, normal=int(normal[start])))
    return walls


_WALL_CACHE = weakref.WeakKeyDictionary()


def _scene_walls(scene):
    walls = _WALL_CACHE.get(scene)
    if walls is None:
        walls = extract_walls(scene)
        _WALL_CACHE[scene] = walls
    return walls


def _reflection_geometry(tx, rx, walls):
    """Image-method reflection points for every wall, ordered by path length.

    Returns a list of (length_2d, reflection Point3) for walls whose mirror
    construction lands strictly inside the wall span, with both endpoints on
    the open side of the wall.
    """
    if not walls:
        return []
    along_x = np.array([w.axis == "x" for w in walls])
    coord = np.array([w.coord_m for w in walls])
    start = np.array([w.start_m for w in walls])
    end = np.array([w.end_m for w in walls])
    normal = np.array([w.normal for w in walls], dtype=np.float64)

    # u runs along the wall, v across it
    tx_u = np.where(along_x, tx.x, tx.y)
    tx_v = np.where(along_x, tx.y, tx.x)
    rx_u = np.where(along_x, rx.x, rx.y)
    rx_v = np.where(along_x, rx.y, rx.x)
    facing = (normal * (tx_v - coord) > 0.0) & (normal * (rx_v - coord) > 0.0)

    mirror_v = 2.0 * coord - tx_v
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (coord - mirror_v) / (rx_v - mirror_v)
    hit_u = tx_u + t * (rx_u - tx_u)
    valid = facing & (hit_u > start) & (hit_u < end)
    length_2d = np.hypot(rx_u - tx_u, rx_v - mirror_v)

    out = []
    for i in np.flatnonzero(valid):
        z = tx.z + t[i] * (rx.z - tx.z)
        if along_x[i]:
            point = Point3(float(hit_u[i]), float(coord[i]), float(z))
        else:
            point = Point3(float(coord[i]), float(hit_u[i]), float(z))
        out.append((float(length_2d[i]), point))
    out.sort(key=lambda item: item[0])
    return out


def _reflected_ray(tx, point, rx, cfg):
    length = distance_3d(tx, point) + distance_3d(point, rx)
    return Ray(vertices=(tx, point, rx), length_m=length, los=False,
               base_loss_db=fspl_db(length, cfg.carrier_hz) + cfg.reflection_loss_db)


def reflected_rays(scene, tx, rx, walls=None, cfg=None):
    """All valid single-reflection rays between two points.

    Args:
    - scene: the Scene used for line-of-sight tests of both legs.
    - tx, rx: the endpoints, outside buildings.
    - walls: walls to reflect from, the scene's exterior walls when None.
    - cfg: an OracleConfig for the loss terms, defaults when None.

    Returns:
    - rays: a list of Ray ordered by base loss.
    """
    cfg = cfg or OracleConfig()
    if walls is None:
        walls = _scene_walls(scene)
    rays = []
    for _, point in _reflection_geometry(tx, rx, walls):
        if los_clear(scene, tx, point) and los_clear(scene, point, rx):
            rays.append(_reflected_ray(tx, point, rx, cfg))
    rays.sort(key=lambda ray: ray.base_loss_db)
    return rays


def trace_candidates(scene, tx, rx, cfg, limit=None, walls=None):
    """Candidate rays in order of increasing base loss.

    Args:
    - limit: stop after this many valid candidates; all when None.

    Returns:
    - rays: a list of Ray; the direct ray, when clear, comes first since
        it is never longer than a reflected one and carries no penalty.
    """
    if walls is None:
        walls = _scene_walls(scene)
    rays = []
    if los_clear(scene, tx, rx):
        d = distance_3d(tx, rx)
        rays.append(Ray(vertices=(tx, rx), length_m=d, los=True,
                        base_loss_db=fspl_db(d, cfg.carrier_hz)))
    for _, point in _reflection_geometry(tx, rx, walls):
        if limit is not None and len(rays) >= limit:
            break
        if los_clear(scene, tx, point) and los_clear(scene, point, rx):
            rays.append(_reflected_ray(tx, point, rx, cfg))
    rays.sort(key=lambda ray: ray.base_loss_db)
    return rays if limit is None else rays[:limit]


def path_loss(scene, tx, rx, cfg):
    """Ground-truth path loss of one link.

    The two candidates with the smallest base loss receive their foliage
    loss, summed over every segment, and the smaller total wins.

    Returns:
    - result: a PathLossResult, or None on outage (no candidate ray, or a
        total loss above cfg.max_pathloss_db).
    """
    _check_in_bounds(scene, tx, rx)
    for point in (tx, rx):
        row, col = scene.pixel_of(point)
        if scene.building_mask[row, col]:
            raise ValidationError("link endpoint ({}, {}) lies inside a building".format(
                point.x, point.y))
    candidates = trace_candidates(scene, tx, rx, cfg, limit=2)
    if not candidates:
        return None
    rays = [
        dataclasses.replace(ray, foliage_loss_db=sum(
            foliage_loss_db(scene, segment, cfg) for segment in ray.segments()))
        for ray in candidates]
    best = min(rays, key=lambda ray: ray.total_loss_db)
    if best.total_loss_db > cfg.max_pathloss_db:
        return None
    return PathLossResult(pathloss_db=best.total_loss_db, los=best.los, ray=best)


def _sample_points(rng, scene, free, count, height_m):
    picks = rng.integers(0, len(free), size=count)
    offsets = rng.random((count, 2))
    res = scene.resolution_m
    return [
        Point3(float((free[i, 1] + ox) * res), float((free[i, 0] + oy) * res), height_m)
        for i, (ox, oy) in zip(picks, offsets)]


def thread_map(function, items, threads=1):
    """Map in input order; threads=1 runs the serial reference path."""
    if threads <= 1:
        return [function(item) for item in items]
    with futures.ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(function, items))


def generate_dataset(scenes, n_poles_per_scene, n_ue_per_scene, cfg, seed,
                     radius_m=500.0, threads=1):
    """Sample poles and UEs per scene and label every link with the oracle.

    Args:
    - scenes: a list of Scene.
    - n_poles_per_scene, n_ue_per_scene: sample counts per scene, drawn
        uniformly over non-building space.
    - cfg: an OracleConfig (heights, loss terms, outage cutoff).
    - seed: an unsigned integer; equal inputs give identical records.
    - radius_m: only pole-UE pairs within this 2-D range become links.
    - threads: worker threads; the record order never depends on it.

    Returns:
    - records: a list of LinkRecord, outages dropped.
    """
    cfg.validate()
    records = []
    for index, scene in enumerate(scenes):
        scene.validate()
        if n_poles_per_scene <= 0 or n_ue_per_scene <= 0:
            continue
        free = np.argwhere(scene.building_mask == 0)
        if len(free) == 0:
            raise ValidationError("scene {} has no free pixel".format(scene.id))
        rng = np.random.default_rng([seed, index])
        poles = _sample_points(rng, scene, free, n_poles_per_scene, cfg.tx_height_m)
        ues = _sample_points(rng, scene, free, n_ue_per_scene, cfg.rx_height_m)
        pairs = [
            (pole, ue) for pole in poles for ue in ues
            if 0.0 < distance_2d(pole, ue) <= radius_m]
        results = thread_map(
            lambda pair: path_loss(scene, pair[0], pair[1], cfg), pairs, threads)
        kept = 0
        for (pole, ue), result in zip(pairs, results):
            if result is None:
                continue
            records.append(LinkRecord(
                scene_id=scene.id, tx=pole, rx=ue, distance_3d_m=distance_3d(pole, ue),
                pathloss_db=result.pathloss_db, los=result.los))
            kept += 1
        logger.info("scene %s: %d of %d candidate links kept", scene.id, kept, len(pairs))
    return records


def dataset_metadata(scenes, cfg, seed, n_poles_per_scene, n_ue_per_scene, radius_m,
                     records):
    los = sum(1 for record in records if record.los)
    return {
        "format_version": DATASET_FORMAT_VERSION,
        "oracle": dataclasses.asdict(cfg),
        "seed": int(seed),
        "scene_ids": [scene.id for scene in scenes],
        "poles_per_scene": int(n_poles_per_scene),
        "ues_per_scene": int(n_ue_per_scene),
        "radius_m": float(radius_m),
        "max_pathloss_db": float(cfg.max_pathloss_db),
        "counts": {"links": len(records), "los": los, "nlos": len(records) - los}}
