"""End-to-end synthetic benchmark: scenes, oracle links, splits, surrogate, baselines, MIT License"""


import os
import sys

from plformer.baselines import DistanceMLP
from plformer.baselines import GppConfig
from plformer.baselines import predict_gpp
from plformer.evaluation import combine_reports
from plformer.evaluation import evaluate
from plformer.evaluation import format_comparison
from plformer.evaluation import write_report
from plformer.extract import batch_extract
from plformer.oracle import OracleConfig
from plformer.oracle import generate_dataset
from plformer.oracle import generate_scene
from plformer.scene import save_scene
from plformer.splits import SplitPlan
from plformer.splits import make_splits
from plformer.splits import write_splits
from plformer.training import TrainConfig
from plformer.training import train
from plformer.transformer import ModelConfig
from plformer.transformer import SurrogateModel
from plformer.transformer import predict
from plformer.transformer import save_model
import tensorflow as tf


TEST_SPLITS = ("test_known", "test_novel")


def ordering_checks(ours, gpp, mlp):
    """The qualitative ordering the surrogate must reach on the benchmark."""
    known, novel = ours.splits["test_known"], ours.splits["test_novel"]
    return [
        ("beats 3GPP RMSE on known maps",
         known["all"].rmse_db < gpp.cell("test_known").rmse_db),
        ("beats 3GPP RMSE on novel maps",
         novel["all"].rmse_db < gpp.cell("test_novel").rmse_db),
        ("NLOS MAE at least 30% under 3GPP on known maps",
         known["nlos"].mae_db <= 0.7 * gpp.cell("test_known", "nlos").mae_db),
        ("novel-map RMSE at least known-map RMSE",
         novel["all"].rmse_db >= known["all"].rmse_db),
        ("beats the distance MLP on NLOS RMSE",
         known["nlos"].rmse_db < mlp.cell("test_known", "nlos").rmse_db)]


if __name__ == "__main__":

    tf.config.experimental.enable_op_determinism()
    for directory in ("data/scenes", "data/splits", "models"):
        os.makedirs(directory, exist_ok=True)

    scenes = {}
    for i in range(12):
        scene = generate_scene(512, 512, seed=[1, i], scene_id="scene_{:03d}".format(i))
        save_scene(scene, os.path.join("data/scenes", scene.id + ".plscene"))
        scenes[scene.id] = scene

    cfg = OracleConfig()
    records = generate_dataset(
        [scenes[k] for k in sorted(scenes)], 30, 120, cfg, seed=2, threads=os.cpu_count() or 1)
    tf.print("Links:", len(records))

    plan = SplitPlan()
    splits = make_splits(records, plan, seed=3)
    write_splits(splits, "data/splits", plan, seed=3)

    model = SurrogateModel(ModelConfig())
    result = train(
        model, list(splits["train"].records), list(splits["val_known"].records), scenes,
        TrainConfig(num_steps=20000), history_path="models/desk.plw.history.jsonl",
        threads=os.cpu_count() or 1)
    save_model(model, "models/desk.plw")

    mlp = DistanceMLP()
    mlp.fit(list(splits["train"].records))

    reports = {"ours": [], "3gpp": [], "mlp": []}
    for name in TEST_SPLITS:

        test_records = list(splits[name].records)
        extracts = batch_extract(
            scenes, test_records, model.model_config.patch_size, model.pad_patches,
            threads=os.cpu_count() or 1)

        reports["ours"].append(evaluate(
            predict(model, extracts), test_records, split=name, label="ours"))
        reports["3gpp"].append(evaluate(
            predict_gpp(test_records, GppConfig()), test_records, split=name, label="3gpp"))
        reports["mlp"].append(evaluate(
            mlp.predict(test_records), test_records, split=name, label="mlp"))

    combined = {label: combine_reports(group, label) for label, group in reports.items()}
    for label, report in combined.items():
        write_report(report, "models/report_{}.json".format(label))
    print(format_comparison(list(combined.values())), end="")

    checks = ordering_checks(combined["ours"], combined["3gpp"], combined["mlp"])
    for name, passed in checks:
        print("{} {}".format("PASS" if passed else "FAIL", name))
    sys.exit(0 if all(passed for _, passed in checks) else 1)
