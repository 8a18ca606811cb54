"""Known-area and novel-area dataset splits, MIT License"""


import dataclasses
import logging
import os

import numpy as np

from plformer.errors import ValidationError
from plformer.scene import DatasetSplit
from plformer.scene import SPLIT_NAMES
from plformer.scene import check_disjoint
from plformer.scene import read_dataset
from plformer.scene import write_dataset
from plformer.scene import write_metadata


logger = logging.getLogger(__name__)


NUM_AREAS = 4
AREA_MODES = ("scene", "quadrant")


@dataclasses.dataclass(frozen=True)
class SplitPlan:
    """How links are dealt to areas and, inside known areas, to splits.

    area_mode "scene" deals whole scenes to the four areas after a seeded
    shuffle; "quadrant" cuts the transmitter locations at their median x and
    median y, so one scene can span several areas.
    """

    area_mode: str = "scene"
    novel_test_area: int = 0
    novel_val_area: int = 1
    train_fraction: float = 0.16
    test_fraction: float = 0.80
    val_fraction: float = 0.04

    def validate(self):
        if self.area_mode not in AREA_MODES:
            raise ValidationError("area_mode must be one of {}, got {!r}".format(
                ", ".join(AREA_MODES), self.area_mode))
        areas = (self.novel_test_area, self.novel_val_area)
        if any(not 0 <= area < NUM_AREAS for area in areas) or areas[0] == areas[1]:
            raise ValidationError("novel areas must be two distinct ids in [0, {}), got {}".format(
                NUM_AREAS, areas))
        fractions = (self.train_fraction, self.test_fraction, self.val_fraction)
        if any(f < 0.0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
            raise ValidationError("split fractions must be >= 0 and sum to 1, got {}".format(
                fractions))

    @classmethod
    def with_fractions(cls, fractions, **kwargs):
        """Build a plan from a (train, test, val) triple."""
        if len(fractions) != 3:
            raise ValidationError("expected train,test,val fractions, got {}".format(fractions))
        train, test, val = (float(f) for f in fractions)
        return cls(train_fraction=train, test_fraction=test, val_fraction=val, **kwargs)


def assign_areas(records, plan, seed):
    """The area id of every record."""
    if plan.area_mode == "scene":
        scene_ids = sorted({record.scene_id for record in records})
        if len(scene_ids) < NUM_AREAS:
            raise ValidationError("scene areas need at least {} scenes, got {}".format(
                NUM_AREAS, len(scene_ids)))
        order = np.random.default_rng([seed, 0]).permutation(len(scene_ids))
        area_of = {scene_ids[i]: position % NUM_AREAS for position, i in enumerate(order)}
        areas = np.array([area_of[record.scene_id] for record in records], dtype=np.int64)
    else:
        x = np.array([record.tx.x for record in records])
        y = np.array([record.tx.y for record in records])
        areas = (x >= np.median(x)).astype(np.int64) + 2 * (y >= np.median(y)).astype(np.int64)
    for area in range(NUM_AREAS):
        if not np.any(areas == area):
            raise ValidationError("area {} has no links".format(area))
    return areas


def make_splits(records, plan, seed):
    """Deal links to the five splits.

    Args:
    - records: a list of LinkRecord.
    - plan: a SplitPlan.
    - seed: an unsigned integer; equal inputs give identical splits.

    Returns:
    - splits: a dict from split name to DatasetSplit; every split keeps the
        input record order.
    """
    plan.validate()
    if not records:
        raise ValidationError("cannot split an empty dataset")
    areas = assign_areas(records, plan, seed)
    known = np.flatnonzero(
        (areas != plan.novel_test_area) & (areas != plan.novel_val_area))

    n = len(known)
    n_train = int(np.floor(plan.train_fraction * n + 0.5))
    n_val = int(np.floor(plan.val_fraction * n + 0.5))
    order = known[np.random.default_rng([seed, 1]).permutation(n)]
    members = {
        "train": order[:n_train],
        "val_known": order[n_train:n_train + n_val],
        "test_known": order[n_train + n_val:],
        "val_novel": np.flatnonzero(areas == plan.novel_val_area),
        "test_novel": np.flatnonzero(areas == plan.novel_test_area)}
    splits = {
        name: DatasetSplit(name, tuple(records[i] for i in np.sort(members[name])))
        for name in SPLIT_NAMES}
    if plan.area_mode == "scene":
        check_disjoint(splits)
    logger.info("splits: %s", ", ".join(
        "{}={}".format(name, len(splits[name])) for name in SPLIT_NAMES))
    return splits


def split_path(directory, name):
    return os.path.join(directory, name + ".jsonl")


def write_splits(splits, directory, plan, seed, timestamp=True):
    os.makedirs(directory, exist_ok=True)
    for name in SPLIT_NAMES:
        write_dataset(splits[name].records, split_path(directory, name))
    write_metadata(os.path.join(directory, "splits"), {
        "plan": dataclasses.asdict(plan),
        "seed": int(seed),
        "counts": {name: len(splits[name]) for name in SPLIT_NAMES},
        "scenes": {name: sorted(splits[name].scene_ids()) for name in SPLIT_NAMES}},
        timestamp=timestamp)


def read_splits(directory):
    return {
        name: DatasetSplit(name, tuple(read_dataset(split_path(directory, name))))
        for name in SPLIT_NAMES}
