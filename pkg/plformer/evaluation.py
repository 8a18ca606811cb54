"""RMSE/MAE reports, error CDFs and model comparison tables, MIT License"""


import dataclasses
import json
import logging

import numpy as np

from plformer.errors import LinkMismatchError
from plformer.errors import NonFiniteError
from plformer.errors import PLFormerError
from plformer.errors import ValidationError


logger = logging.getLogger(__name__)


CELLS = ("all", "los", "nlos")
QUANTILES = (("p50_db", 0.50), ("p90_db", 0.90), ("p95_db", 0.95))


@dataclasses.dataclass(frozen=True, eq=False)
class ErrorStats:
    """Error statistics of one split and link class; abs_errors is sorted."""

    count: int
    rmse_db: float
    mae_db: float
    quantiles: dict
    abs_errors: np.ndarray

    def to_dict(self):
        data = {"count": self.count, "rmse_db": self.rmse_db, "mae_db": self.mae_db}
        data.update(self.quantiles)
        return data

    @classmethod
    def from_dict(cls, data):
        return cls(
            count=int(data["count"]), rmse_db=data["rmse_db"], mae_db=data["mae_db"],
            quantiles={key: data.get(key) for key, _ in QUANTILES},
            abs_errors=np.zeros(0))


def error_stats(errors):
    """Statistics of signed errors in dB; empty input gives None metrics."""
    errors = np.asarray(errors, dtype=np.float64).reshape(-1)
    if errors.size == 0:
        return ErrorStats(0, None, None, {key: None for key, _ in QUANTILES}, np.zeros(0))
    if not np.all(np.isfinite(errors)):
        raise NonFiniteError("{} of {} errors are not finite".format(
            int(np.count_nonzero(~np.isfinite(errors))), errors.size))
    abs_errors = np.sort(np.abs(errors))
    rmse = float(np.sqrt(np.mean(np.square(errors))))
    mae = float(np.mean(abs_errors))
    if mae > rmse * (1.0 + 1e-12) + 1e-15:
        raise PLFormerError("MAE {} exceeds RMSE {}".format(mae, rmse))
    quantiles = {key: float(np.quantile(abs_errors, q)) for key, q in QUANTILES}
    return ErrorStats(int(errors.size), rmse, mae, quantiles, abs_errors)


@dataclasses.dataclass(frozen=True, eq=False)
class EvalReport:
    """Error statistics of one model, by split, then by all/los/nlos."""

    label: str
    splits: dict

    def cell(self, split, cell="all"):
        return self.splits[split][cell]

    def to_dict(self):
        return {
            "label": self.label,
            "splits": {
                split: {cell: stats.to_dict() for cell, stats in cells.items()}
                for split, cells in self.splits.items()}}


def _align(predictions, records):
    """Predicted dB per record from a prediction dict or a sequence."""
    if isinstance(predictions, dict):
        missing = [i for i in range(len(records)) if i not in predictions]
        extra = sorted(k for k in predictions if not 0 <= k < len(records))
        if missing or extra:
            raise LinkMismatchError(missing, extra)
        values = []
        for i, record in enumerate(records):
            scene_id, value = predictions[i]
            if scene_id != record.scene_id:
                raise ValidationError("link {} belongs to scene {}, prediction says {}".format(
                    i, record.scene_id, scene_id))
            values.append(value)
        return np.array(values, dtype=np.float64)
    values = np.asarray(predictions, dtype=np.float64).reshape(-1)
    if values.size != len(records):
        n = min(values.size, len(records))
        raise LinkMismatchError(list(range(n, len(records))), list(range(n, values.size)))
    return values


def evaluate(predictions, records, split="test", label="model"):
    """Compare predictions with ground truth.

    Args:
    - predictions: a dict link index -> (scene_id, dB) as read from a
        prediction file, or a sequence aligned with records.
    - records: the ground-truth LinkRecord list; link index i is records[i].
    - split: the split name the report cell is filed under.
    - label: the model name.

    Returns:
    - report: an EvalReport with one split.
    """
    predicted = _align(predictions, records)
    truth = np.array([record.pathloss_db for record in records], dtype=np.float64)
    los = np.array([record.los for record in records], dtype=bool)
    errors = predicted - truth
    if not np.all(np.isfinite(errors)):
        raise ValidationError("predictions for {} contain non-finite values".format(label))
    cells = {
        "all": error_stats(errors),
        "los": error_stats(errors[los]),
        "nlos": error_stats(errors[~los])}
    logger.info("%s on %s: RMSE %s dB, MAE %s dB over %d links", label, split,
                cells["all"].rmse_db, cells["all"].mae_db, cells["all"].count)
    return EvalReport(label=label, splits={split: cells})


def combine_reports(reports, label=None):
    """Merge single-split reports of one model."""
    if not reports:
        raise ValidationError("no reports to combine")
    splits = {}
    for report in reports:
        for split, cells in report.splits.items():
            if split in splits:
                raise ValidationError("split {} appears twice".format(split))
            splits[split] = cells
    return EvalReport(label=label or reports[0].label, splits=splits)


def write_report(report, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


def write_reports(reports, path):
    """One report is written as an object, several as a JSON list."""
    if len(reports) == 1:
        write_report(reports[0], path)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump([report.to_dict() for report in reports], f, indent=2, sort_keys=True)
        f.write("\n")


def _report_from_dict(data, path):
    try:
        return EvalReport(label=str(data["label"]), splits={
            split: {cell: ErrorStats.from_dict(stats) for cell, stats in cells.items()}
            for split, cells in data["splits"].items()})
    except (KeyError, TypeError, AttributeError) as e:
        raise ValidationError("{}: malformed report ({})".format(path, e))


def read_report(path):
    return read_reports(path)[0]


def read_reports(path):
    """Every report of a file written by write_report or write_reports."""
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    if isinstance(data, dict):
        data = [data]
    if not data:
        raise ValidationError("{}: no reports".format(path))
    return [_report_from_dict(item, path) for item in data]


def write_cdf_csv(report, path):
    """Write the empirical CDF of absolute errors of every report cell."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("split,cell,abs_error_db,cumulative_fraction\n")
        for split in sorted(report.splits):
            for cell in CELLS:
                stats = report.splits[split][cell]
                n = stats.abs_errors.size
                for i, value in enumerate(stats.abs_errors.tolist(), start=1):
                    f.write("{},{},{!r},{!r}\n".format(split, cell, value, i / n))


def _number(value):
    return "-" if value is None else "{:.2f}".format(value)


def format_comparison(reports, splits=("test_known", "test_novel"), cells=("all", "nlos")):
    """A markdown table of RMSE and MAE per model, split and link class."""
    header = ["Model"]
    for cell in cells:
        for metric in ("RMSE", "MAE"):
            header += ["{} {} {}".format(metric, cell.upper(), split) for split in splits]
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    for report in reports:
        row = [report.label]
        for cell in cells:
            for metric in ("rmse_db", "mae_db"):
                for split in splits:
                    stats = report.splits.get(split, {}).get(cell)
                    row.append(_number(None if stats is None else getattr(stats, metric)))
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"
