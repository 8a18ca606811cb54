"""The plformer command line: scenes, datasets, training, baselines, evaluation and radio maps, MIT License"""


import argparse
import dataclasses
import logging
import os
import sys

import tensorflow as tf

from plformer import __version__
from plformer.baselines import DistanceMLP
from plformer.baselines import GppConfig
from plformer.baselines import MlpConfig
from plformer.baselines import predict_gpp
from plformer.config import build_config
from plformer.config import merge_overrides
from plformer.config import read_flat_config
from plformer.errors import PLFormerError
from plformer.errors import ValidationError
from plformer.evaluation import combine_reports
from plformer.evaluation import evaluate
from plformer.evaluation import format_comparison
from plformer.evaluation import read_reports
from plformer.evaluation import write_cdf_csv
from plformer.evaluation import write_reports
from plformer.extract import batch_extract
from plformer.oracle import OracleConfig
from plformer.oracle import SceneGenParams
from plformer.oracle import dataset_metadata
from plformer.oracle import generate_dataset
from plformer.oracle import generate_scene
from plformer.radiomap import GppPredictor
from plformer.radiomap import OraclePredictor
from plformer.radiomap import SurrogatePredictor
from plformer.radiomap import render_radiomap
from plformer.radiomap import write_radiomap
from plformer.scene import DATASET_FORMAT_VERSION
from plformer.scene import SCENE_FORMAT_VERSION
from plformer.scene import Point3
from plformer.scene import load_scene
from plformer.scene import load_scene_dir
from plformer.scene import read_dataset
from plformer.scene import read_predictions
from plformer.scene import save_scene
from plformer.scene import write_dataset
from plformer.scene import write_metadata
from plformer.scene import write_predictions
from plformer.selftest import run_selftest
from plformer.splits import SplitPlan
from plformer.splits import make_splits
from plformer.splits import read_splits
from plformer.splits import write_splits
from plformer.training import TrainConfig
from plformer.training import train
from plformer.transformer import CHECKPOINT_FORMAT_VERSION
from plformer.transformer import ModelConfig
from plformer.transformer import SurrogateModel
from plformer.transformer import load_model
from plformer.transformer import predict
from plformer.transformer import save_model


logger = logging.getLogger(__name__)


EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2

ORACLE_FLAGS = {
    "carrier_hz": "carrier_hz",
    "tx_height": "tx_height_m",
    "rx_height": "rx_height_m",
    "reflection_loss": "reflection_loss_db",
    "foliage_rate": "foliage_rate_db_per_m",
    "max_pathloss": "max_pathloss_db",
}

TRAIN_FLAGS = {
    "steps": "num_steps",
    "lr": "learning_rate",
    "batch": "batch_size",
    "seed": "seed",
}


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; usage errors exit 1 here."""

    def error(self, message):
        raise UsageError("{}: {}".format(self.prog, message))


def _size(text):
    try:
        width, height = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError("expected WxH in pixels, got {!r}".format(text))
    return width, height


def _xy(text):
    try:
        x, y = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected x,y in meters, got {!r}".format(text))
    return x, y


def _csv(text):
    return [item for item in text.split(",") if item]


def _floats(text):
    try:
        return [float(item) for item in _csv(text)]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated numbers, got {!r}".format(text))


def _label(path):
    name = os.path.basename(path)
    for suffix in (".jsonl", ".json"):
        if name.endswith(suffix):
            return name[:-len(suffix)]
    return name


def _makedirs_for(path):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)


def _load_scene_list(directory):
    scenes = load_scene_dir(directory)
    return [scenes[scene_id] for scene_id in sorted(scenes)]


#######################################
# Subcommands; each returns an exit code
#######################################


def cmd_gen_scenes(args):
    width, height = args.size
    os.makedirs(args.out, exist_ok=True)
    params = SceneGenParams()
    if args.config:
        params = build_config(SceneGenParams, read_flat_config(args.config))
    params = params.scaled(args.density)
    ids = []
    for i in range(args.count):
        scene_id = "scene_{:03d}".format(i)
        scene = generate_scene(width, height, params, seed=[args.seed, i], scene_id=scene_id,
                               resolution_m=args.resolution)
        save_scene(scene, os.path.join(args.out, scene_id + ".plscene"))
        ids.append(scene_id)
    write_metadata(os.path.join(args.out, "scenes"), {
        "format_version": SCENE_FORMAT_VERSION,
        "count": args.count,
        "size_px": [width, height],
        "resolution_m": args.resolution,
        "density": args.density,
        "generator": dataclasses.asdict(params),
        "seed": args.seed,
        "scene_ids": ids}, timestamp=not args.no_timestamp)
    logger.info("wrote %d scenes to %s", args.count, args.out)
    return EXIT_OK


def cmd_gen_dataset(args):
    values = read_flat_config(args.config) if args.config else {}
    overrides = {field: getattr(args, flag) for flag, field in ORACLE_FLAGS.items()}
    overrides["seed"] = args.seed
    cfg = build_config(OracleConfig, merge_overrides(values, overrides))
    scenes = _load_scene_list(args.scenes)
    records = generate_dataset(scenes, args.poles, args.ues, cfg, args.seed,
                               radius_m=args.radius, threads=args.threads)
    _makedirs_for(args.out)
    write_dataset(records, args.out)
    write_metadata(args.out, dataset_metadata(
        scenes, cfg, args.seed, args.poles, args.ues, args.radius, records),
        timestamp=not args.no_timestamp)
    logger.info("wrote %d links to %s", len(records), args.out)
    return EXIT_OK


def cmd_split(args):
    plan = SplitPlan.with_fractions(
        args.fractions, area_mode=args.area_mode,
        novel_test_area=args.novel_test_area, novel_val_area=args.novel_val_area)
    splits = make_splits(read_dataset(args.dataset), plan, args.seed)
    write_splits(splits, args.out, plan, args.seed, timestamp=not args.no_timestamp)
    return EXIT_OK


def _train_configs(path, overrides):
    """Route the keys of one flat file to ModelConfig and TrainConfig."""
    values = merge_overrides(read_flat_config(path) if path else {}, overrides)
    model_fields = {field.name for field in dataclasses.fields(ModelConfig)}
    train_fields = {field.name for field in dataclasses.fields(TrainConfig)}
    unknown = sorted(set(values) - model_fields - train_fields)
    if unknown:
        raise ValidationError("unknown config key(s): {}".format(", ".join(unknown)))
    model_config = build_config(
        ModelConfig, {k: v for k, v in values.items() if k in model_fields})
    train_config = build_config(
        TrainConfig, {k: v for k, v in values.items() if k in train_fields})
    return model_config, train_config


def cmd_train(args):
    overrides = {field: getattr(args, flag) for flag, field in TRAIN_FLAGS.items()}
    model_config, train_config = _train_configs(args.config, overrides)
    splits = read_splits(args.splits)
    scenes = load_scene_dir(args.scenes)
    model = SurrogateModel(model_config)
    logger.info("surrogate with %d parameters", model.count_params())
    _makedirs_for(args.out)
    result = train(model, list(splits["train"].records), list(splits["val_known"].records),
                   scenes, train_config, history_path=args.out + ".history.jsonl",
                   threads=args.threads)
    save_model(model, args.out)
    write_metadata(args.out, {
        "model": dataclasses.asdict(model_config),
        "train": dataclasses.asdict(train_config),
        "splits": os.path.abspath(args.splits),
        "best_step": result.best_step,
        "best_val_rmse_db": result.best_val_rmse_db}, timestamp=not args.no_timestamp)
    return EXIT_OK


def _write_record_predictions(path, records, values):
    _makedirs_for(path)
    write_predictions(path, (
        (i, record.scene_id, value) for i, (record, value) in enumerate(zip(records, values))))
    logger.info("wrote %d predictions to %s", len(records), path)


def cmd_predict(args):
    model = load_model(args.ckpt)
    records = read_dataset(args.dataset)
    extracts = batch_extract(load_scene_dir(args.scenes), records,
                             model.model_config.patch_size, model.pad_patches, args.threads)
    values = predict(model, extracts, args.batch_size)
    _write_record_predictions(args.out, records, values)
    return EXIT_OK


def cmd_baseline_3gpp(args):
    cfg = GppConfig(fc_ghz=args.fc_ghz, h_bs_m=args.h_bs, h_ut_m=args.h_ut)
    cfg.validate()
    records = read_dataset(args.dataset)
    _write_record_predictions(args.out, records, predict_gpp(records, cfg))
    return EXIT_OK


def cmd_baseline_mlp(args):
    values = read_flat_config(args.config) if args.config else {}
    config = build_config(MlpConfig, merge_overrides(values, {
        "num_steps": args.steps, "learning_rate": args.lr, "seed": args.seed}))
    mlp = DistanceMLP(config)
    losses = mlp.fit(read_dataset(args.train))
    logger.info("distance MLP final loss %.6f", losses[-1] if losses else float("nan"))
    if args.save_model:
        _makedirs_for(args.save_model)
        mlp.save(args.save_model)
    records = read_dataset(args.dataset)
    _write_record_predictions(args.out, records, mlp.predict(records))
    return EXIT_OK


def cmd_eval(args):
    truth = read_dataset(args.truth)
    paths = _csv(args.pred)
    labels = _csv(args.label) if args.label else [_label(path) for path in paths]
    if len(labels) != len(paths):
        raise ValidationError("{} labels for {} prediction files".format(len(labels), len(paths)))
    reports = [
        evaluate(read_predictions(path), truth, split=args.split, label=label)
        for path, label in zip(paths, labels)]
    _makedirs_for(args.out)
    write_reports(reports, args.out)
    if args.cdf:
        for report in reports:
            path = args.cdf if len(reports) == 1 else "{}.{}.csv".format(
                os.path.splitext(args.cdf)[0], report.label)
            write_cdf_csv(report, path)
    for report in reports:
        stats = report.cell(args.split)
        print("{}: RMSE {:.3f} dB, MAE {:.3f} dB over {} links".format(
            report.label, stats.rmse_db, stats.mae_db, stats.count))
    return EXIT_OK


def cmd_render(args):
    scene = load_scene(args.scene)
    if args.oracle:
        cfg = OracleConfig(tx_height_m=args.tx_height, rx_height_m=args.rx_height)
        cfg.validate()
        predictor = OraclePredictor(cfg, threads=args.threads)
    elif args.gpp:
        predictor = GppPredictor(GppConfig(h_bs_m=args.tx_height, h_ut_m=args.rx_height))
    else:
        predictor = SurrogatePredictor(load_model(args.ckpt), threads=args.threads)
    x, y = args.tx
    radiomap = render_radiomap(scene, Point3(x, y, args.tx_height), predictor,
                               resolution_m=args.resolution, extent_m=args.extent,
                               rx_height_m=args.rx_height)
    _makedirs_for(args.out)
    write_radiomap(radiomap, scene, args.out)
    return EXIT_OK


def cmd_compare(args):
    by_label = {}
    for path in _csv(args.reports):
        for report in read_reports(path):
            by_label.setdefault(report.label, []).append(report)
    reports = [combine_reports(group, label) for label, group in by_label.items()]
    table = format_comparison(reports, splits=tuple(_csv(args.splits)))
    if args.out:
        _makedirs_for(args.out)
        with open(args.out, "w", encoding="utf-8", newline="\n") as f:
            f.write(table)
    print(table, end="")
    return EXIT_OK


def cmd_selftest(args):
    results = run_selftest(args.suite or None, seed=args.seed)
    for result in results:
        print("[{}] {} ({:.1f} s)".format(
            "PASS" if result.passed else "FAIL", result.name, result.seconds))
        for check in result.checks:
            if args.verbose or not check.passed:
                print("    {} {} {}".format(
                    "ok  " if check.passed else "FAIL", check.name, check.detail))
    return EXIT_OK if all(result.passed for result in results) else EXIT_VALIDATION


def parse_args(argv=None):
    parser = _Parser(
        prog="plformer",
        description="mmWave link-level path-loss toolkit: procedural scenes, a ray-traced "
                    "oracle, a variable-height transformer surrogate and baselines",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  plformer gen-scenes --out scenes --count 12 --size 512x512 --seed 1
  plformer gen-dataset --scenes scenes --out links.jsonl --poles 30 --ues 120 --seed 2
  plformer split --dataset links.jsonl --out splits --seed 3
  plformer train --splits splits --scenes scenes --config desk.cfg --out model.plw
  plformer predict --ckpt model.plw --dataset splits/test_known.jsonl --scenes scenes --out pred.jsonl
  plformer eval --pred pred.jsonl,gpp.jsonl --truth splits/test_known.jsonl --split test_known --out known.json
  plformer render --oracle --scene scenes/scene_000.plscene --tx 100,120 --extent 200 --out maps/oracle
        """)
    parser.add_argument("--version", action="version", version=(
        "plformer {} (scene format {}, dataset format {}, checkpoint format {})".format(
            __version__, SCENE_FORMAT_VERSION, DATASET_FORMAT_VERSION,
            CHECKPOINT_FORMAT_VERSION)))
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker threads; 1 runs the deterministic reference path")
    parser.add_argument("--no-timestamp", action="store_true",
                        help="leave creation times out of metadata sidecars")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    verbosity.add_argument("--quiet", "-q", action="store_true", help="warnings only")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("gen-scenes", help="generate procedural urban scenes")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--size", type=_size, required=True, help="WxH in pixels")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--density", type=float, default=1.0,
                   help="scales building and foliage coverage; 0 gives empty scenes")
    p.add_argument("--resolution", type=float, default=1.0, help="meters per pixel")
    p.add_argument("--config", help="flat key = value scene generator config")
    p.set_defaults(func=cmd_gen_scenes)

    p = sub.add_parser("gen-dataset", help="label pole-UE links with the oracle")
    p.add_argument("--scenes", required=True, help="directory of .plscene files")
    p.add_argument("--out", required=True, help="output JSON-lines dataset")
    p.add_argument("--poles", type=int, required=True, help="poles per scene")
    p.add_argument("--ues", type=int, required=True, help="UEs per scene")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--radius", type=float, default=500.0, help="maximum 2-D link range (m)")
    p.add_argument("--config", help="flat key = value oracle config")
    p.add_argument("--carrier-hz", type=float)
    p.add_argument("--tx-height", type=float)
    p.add_argument("--rx-height", type=float)
    p.add_argument("--reflection-loss", type=float)
    p.add_argument("--foliage-rate", type=float)
    p.add_argument("--max-pathloss", type=float)
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("split", help="deal links to train/val/test known and novel splits")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--fractions", type=_floats, default=[0.16, 0.80, 0.04],
                   help="train,test,val fractions of the known areas")
    p.add_argument("--area-mode", choices=("scene", "quadrant"), default="scene")
    p.add_argument("--novel-test-area", type=int, default=0)
    p.add_argument("--novel-val-area", type=int, default=1)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train the transformer surrogate")
    p.add_argument("--splits", required=True, help="directory written by split")
    p.add_argument("--scenes", required=True, help="directory of .plscene files")
    p.add_argument("--config", help="flat key = value model and training config")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict a dataset with a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--scenes", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--batch-size", type=int, default=64)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("baseline-3gpp", help="3GPP UMi street canyon with the true LOS flag")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fc-ghz", type=float, default=28.0)
    p.add_argument("--h-bs", type=float, default=9.0)
    p.add_argument("--h-ut", type=float, default=1.5)
    p.set_defaults(func=cmd_baseline_3gpp)

    p = sub.add_parser("baseline-mlp", help="distance and LOS MLP regressor")
    p.add_argument("--train", required=True, help="training split")
    p.add_argument("--dataset", required=True, help="links to predict")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="flat key = value MLP config")
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--save-model", help="also write the fitted MLP weights")
    p.set_defaults(func=cmd_baseline_mlp)

    p = sub.add_parser("eval", help="score prediction files against ground truth")
    p.add_argument("--pred", required=True, help="comma-separated prediction files")
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True, help="report JSON")
    p.add_argument("--label", help="comma-separated model labels, default the file names")
    p.add_argument("--split", default="test", help="split name the report is filed under")
    p.add_argument("--cdf", help="also write the absolute-error CDF as CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="render a radio map around one transmitter")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--ckpt", help="surrogate checkpoint")
    source.add_argument("--oracle", action="store_true")
    source.add_argument("--gpp", action="store_true")
    p.add_argument("--scene", required=True)
    p.add_argument("--tx", type=_xy, required=True, help="x,y in meters")
    p.add_argument("--extent", type=float, default=200.0, help="map side length (m)")
    p.add_argument("--resolution", type=float, help="pixel size (m), default the scene's")
    p.add_argument("--tx-height", type=float, default=9.0)
    p.add_argument("--rx-height", type=float, default=1.5)
    p.add_argument("--out", required=True, help="output path prefix")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("compare", help="markdown table of several reports")
    p.add_argument("--reports", required=True, help="comma-separated report files")
    p.add_argument("--splits", default="test_known,test_novel")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("selftest", help="gradient, geometry and oracle self checks")
    p.add_argument("--suite", action="append", choices=("gradients", "geometry", "oracle"))
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_selftest)

    return parser.parse_args(argv)


def configure_threads(threads):
    if threads < 1:
        raise ValidationError("--threads must be >= 1, got {}".format(threads))
    if threads == 1:
        try:
            tf.config.threading.set_intra_op_parallelism_threads(1)
            tf.config.threading.set_inter_op_parallelism_threads(1)
        except RuntimeError:
            logger.warning("TensorFlow already initialized; thread pools left unchanged")
        tf.config.experimental.enable_op_determinism()


def main(argv=None):
    try:
        args = parse_args(argv)
    except UsageError as e:
        print("error: {}".format(e), file=sys.stderr)
        return EXIT_VALIDATION

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")

    try:
        configure_threads(args.threads)
        return args.func(args)
    except ValidationError as e:
        logger.error("%s", e)
        return EXIT_VALIDATION
    except OSError as e:
        logger.error("%s", e)
        return EXIT_IO
    except PLFormerError as e:
        logger.error("%s", e)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
