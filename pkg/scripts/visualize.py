"""Figures: error CDFs, a sparse dataset sample, radio maps and attention, MIT License"""


import os

from plformer.evaluation import evaluate
from plformer.extract import batch_extract
from plformer.radiomap import OraclePredictor
from plformer.radiomap import SurrogatePredictor
from plformer.radiomap import overlay_rgb
from plformer.radiomap import render_radiomap
from plformer.scene import load_scene_dir
from plformer.splits import read_splits
from plformer.transformer import load_model
from plformer.transformer import predict
import matplotlib.pyplot as plt
import numpy as np


if __name__ == "__main__":

    os.makedirs("figures", exist_ok=True)
    model = load_model("models/desk.plw")
    scenes = load_scene_dir("data/scenes")
    splits = read_splits("data/splits")

    ############################################
    # Absolute error CDFs per split, LOS / NLOS #
    ############################################

    for name in ("test_known", "test_novel"):
        records = list(splits[name].records)
        extracts = batch_extract(
            scenes, records, model.model_config.patch_size, model.pad_patches)
        report = evaluate(predict(model, extracts), records, split=name, label="ours")
        for cell, style in (("los", "-"), ("nlos", "--")):
            errors = report.cell(name, cell).abs_errors
            if errors.size:
                plt.plot(errors, np.arange(1, errors.size + 1) / errors.size, style,
                         label="{} {}".format(name, cell.upper()))
    plt.xlabel("Absolute error (dB)")
    plt.ylabel("CDF")
    plt.legend()
    plt.savefig("figures/error_cdf.png", dpi=150, metadata={"Software": None})
    plt.clf()

    ###############################################
    # Links of the first pole of the first scene #
    ###############################################

    records = [r for r in splits["train"].records if r.scene_id == sorted(scenes)[0]]
    pole = records[0].tx
    links = [r for r in records if r.tx == pole]
    scene = scenes[records[0].scene_id]
    plt.imshow(scene.building_mask, origin="lower", cmap="gray_r",
               extent=(0, scene.width_m, 0, scene.height_m))
    points = plt.scatter([r.rx.x for r in links], [r.rx.y for r in links],
                         c=[r.pathloss_db for r in links], s=8, cmap="viridis_r")
    plt.plot([pole.x], [pole.y], "r*", markersize=12)
    plt.colorbar(points, label="Path loss (dB)")
    plt.savefig("figures/dataset_sample.png", dpi=150, metadata={"Software": None})
    plt.clf()

    #############################################
    # Oracle and surrogate maps around the pole #
    #############################################

    for predictor in (OraclePredictor(threads=os.cpu_count() or 1),
                      SurrogatePredictor(model, threads=os.cpu_count() or 1)):
        radiomap = render_radiomap(scene, pole, predictor, extent_m=200.0)
        plt.imshow(overlay_rgb(radiomap, scene), origin="lower",
                   extent=(radiomap.x_m[0], radiomap.x_m[-1],
                           radiomap.y_m[0], radiomap.y_m[-1]))
        plt.title(predictor.name)
        plt.savefig("figures/radiomap_{}.png".format(predictor.name), dpi=150,
                    metadata={"Software": None})
        plt.clf()

    ##################################################
    # Where the distance token looks, farthest link #
    ##################################################

    link = max(links, key=lambda r: r.distance_3d_m)
    extract = batch_extract(
        scenes, [link], model.model_config.patch_size, model.pad_patches)[0]
    weights = model.distance_attention(extract)
    rgb = np.ones(extract.pixels.shape[:2] + (3,))
    rgb[..., 0] -= 0.8 * extract.pixels[..., 1]
    rgb[..., 2] -= 0.8 * extract.pixels[..., 1]
    rgb[extract.pixels[..., 0] > 0.5] = 0.0
    plt.imshow(rgb)
    heat = plt.imshow(weights, cmap="magma", alpha=0.6)
    tx_row, tx_col = extract.tx_pixel
    plt.plot([tx_col], [tx_row], "r*", markersize=12)
    plt.colorbar(heat, label="Distance token attention")
    plt.title("Last layer, mean over heads, {:.0f} m link".format(link.distance_3d_m))
    plt.savefig("figures/attention.png", dpi=150, metadata={"Software": None})
    plt.clf()
