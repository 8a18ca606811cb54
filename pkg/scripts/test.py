"""Evaluate a surrogate checkpoint on every split of a split directory, MIT License"""


from plformer.evaluation import combine_reports
from plformer.evaluation import evaluate
from plformer.evaluation import format_comparison
from plformer.evaluation import write_report
from plformer.extract import batch_extract
from plformer.scene import SPLIT_NAMES
from plformer.scene import load_scene_dir
from plformer.splits import read_splits
from plformer.transformer import load_model
from plformer.transformer import predict
import tensorflow as tf


if __name__ == "__main__":

    model = load_model("models/desk.plw")
    scenes = load_scene_dir("data/scenes")
    splits = read_splits("data/splits")

    reports = []
    for name in SPLIT_NAMES:

        records = list(splits[name].records)
        if not records:
            continue

        extracts = batch_extract(
            scenes, records, model.model_config.patch_size, model.pad_patches)
        report = evaluate(predict(model, extracts), records, split=name, label="ours")
        stats = report.cell(name)

        tf.print("Split:", name, "Links:", stats.count,
                 "RMSE:", stats.rmse_db, "MAE:", stats.mae_db)
        reports.append(report)

    report = combine_reports(reports)
    write_report(report, "models/desk_report.json")
    print(format_comparison([report]), end="")
