"""Tile layout, tiled prediction and the species map outputs.

Usage:
    uv run scripts/test_inference.py
"""

import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import numpy as np
from PIL import Image

from checks import check, raises, run_all
from inference import (InferConfig, TileConfigError, argmax_species, predict_map, species_from_logits, tile_plan,
                       worker_count, write_preview)
from inference.predict import PALETTE, THREADS_ENV
from inference.tiling import axis_plan
from raster.filters import blur_array
from raster.grid import FloatGrid, GeoRef, LabelGrid
from training import normalize_features
from unet import NetConfig, forward, init_model

DESK = NetConfig(depth=3, base_filters=8)


def coverage(plan, shape):
    counts = np.zeros(shape, dtype=np.int64)
    for placement in plan:
        counts[placement.write.rows, placement.write.cols] += 1
    return counts


def scene(size, seed, flat=False):
    rng = np.random.default_rng(seed)
    ref = GeoRef(500000.0, 7000000.0, 1.0, size, size)
    dtm = np.full((size, size), 120.0) if flat else 120.0 + np.cumsum(rng.normal(size=(size, size)), axis=1) * 0.1
    chm = np.clip(rng.normal(8.0, 6.0, size=(size, size)), 0.0, None)
    return FloatGrid(ref, dtm), FloatGrid(ref, chm)


def test_tile_plans():
    plan = tile_plan((128, 128), InferConfig(tile_px=128, crop_px=0))
    check("128 px map with 128 px tiles is one tile", len(plan) == 1 and plan[0].read == plan[0].write)
    plan = tile_plan((256, 256), InferConfig(tile_px=128, crop_px=32))
    check("256 px map, 128 px tiles, 32 px crop gives 9 tiles", len(plan) == 9)
    check("reads start at 0, 64 and 128", sorted({p.read.row0 for p in plan}) == [0, 64, 128])
    check("write windows cover every pixel once", np.all(coverage(plan, (256, 256)) == 1))
    check("tiles are row-major", [(p.read.row0, p.read.col0) for p in plan[:3]] == [(0, 0), (0, 64), (0, 128)])


def test_random_plans():
    rng = np.random.default_rng(0)
    for trial in range(50):
        tile = int(rng.choice([32, 64, 128]))
        crop = int(rng.integers(0, tile // 2))
        shape = (int(rng.integers(1, 400)), int(rng.integers(1, 400)))
        plan = tile_plan(shape, InferConfig(tile_px=tile, crop_px=crop))
        inside = all(0 <= p.read.row0 <= p.write.row0 and p.write.row0 + p.write.height <= p.read.row0 + p.read.height
                     and 0 <= p.read.col0 <= p.write.col0 and p.write.col0 + p.write.width <= p.read.col0 + p.read.width
                     and p.read.row0 + p.read.height <= shape[0] and p.read.col0 + p.read.width <= shape[1]
                     for p in plan)
        check(f"trial {trial}: {shape} tile {tile} crop {crop} covers once inside reads",
              inside and np.all(coverage(plan, shape) == 1))


def test_axis_plan_margins():
    ok = True
    for extent in range(1, 1025):
        plan = axis_plan(extent, 128, 32)
        if plan[0][2] != 0 or plan[-1][3] != extent:
            ok = False
        for i, (read0, length, write0, write1) in enumerate(plan):
            if i > 0 and (write0 != plan[i - 1][3] or write0 < read0 + 32):
                ok = False
            if i < len(plan) - 1 and write1 > read0 + length - 32:
                ok = False
            if write1 <= write0:
                ok = False
    check("extents 1..1024: writes abut and keep the crop margin inside the map", ok)


def test_config_errors():
    check("crop leaving no stride rejected", raises(TileConfigError, InferConfig, tile_px=128, crop_px=64))
    check("negative crop rejected", raises(TileConfigError, InferConfig, crop_px=-1))
    check("zero sigma rejected", raises(TileConfigError, InferConfig, blur_sigma_px=0.0))
    dtm, chm = scene(64, 0)
    params = init_model(DESK, seed=0)
    check("tile size the network cannot take rejected",
          raises(TileConfigError, predict_map, dtm, chm, params, DESK, InferConfig(tile_px=126, crop_px=32)))


def test_single_tile_equals_whole_image():
    dtm, chm = scene(64, 1)
    params = init_model(DESK, seed=1)
    cfg = InferConfig()
    species, logits = predict_map(dtm, chm, params, DESK, cfg, threads=1)
    x = normalize_features(dtm.samples, chm.samples)[None]
    expected = blur_array(forward(params, DESK, x)[0][0], cfg.blur_sigma_px).astype(np.float32)
    got = np.stack([g.samples for g in logits])
    check("map smaller than a tile equals forward plus blur", np.array_equal(got, expected))
    check("species is the argmax of the logits", np.array_equal(species.samples, argmax_species(expected)))
    check("outputs keep the input georef", species.georef == dtm.georef and logits[2].georef == dtm.georef)

    dtm, chm = scene(4, 2)
    _, logits = predict_map(dtm, chm, params, DESK, cfg, threads=1)
    x = normalize_features(dtm.samples, chm.samples)[None]
    expected = blur_array(forward(params, DESK, x)[0][0], cfg.blur_sigma_px).astype(np.float32)
    check("4 px map runs unpadded down to a 1 px bottom level",
          np.array_equal(np.stack([g.samples for g in logits]), expected))


def test_blur_before_crop():
    dtm, chm = scene(256, 2)
    params = init_model(DESK, seed=2)
    cfg = InferConfig(tile_px=128, crop_px=32)
    _, logits = predict_map(dtm, chm, params, DESK, cfg, threads=1)
    mosaic = np.stack([g.samples for g in logits])
    middle = tile_plan((256, 256), cfg)[4]
    read = middle.read
    x = normalize_features(dtm.samples[read.rows, read.cols], chm.samples[read.rows, read.cols])[None]
    raw = forward(params, DESK, x)[0][0]
    rows, cols = middle.local_write()
    manual = blur_array(raw, cfg.blur_sigma_px)[:, rows, cols].astype(np.float32)
    written = mosaic[:, middle.write.rows, middle.write.cols]
    check("mosaic equals read, forward, blur, crop", np.array_equal(written, manual))
    cropped_first = blur_array(raw[:, rows, cols], cfg.blur_sigma_px).astype(np.float32)
    check("cropping before the blur would differ at the window edge", np.abs(cropped_first - written).max() > 1e-6)


def test_seamless_mosaic():
    net = replace(DESK, normalization="none")
    params = init_model(net, seed=3)
    dtm, chm = scene(256, 3, flat=True)
    small = predict_map(dtm, chm, params, net, InferConfig(tile_px=128, crop_px=32), threads=1)
    whole = predict_map(dtm, chm, params, net, InferConfig(tile_px=256, crop_px=32), threads=1)
    a = np.stack([g.samples for g in small[1]])
    b = np.stack([g.samples for g in whole[1]])
    check("128 px and 256 px tiles give the same logits", np.allclose(a, b, atol=1e-4),
          f"max difference {np.abs(a - b).max():.2e}")
    top2 = np.sort(b, axis=0)
    clear = top2[-1] - top2[-2] > 1e-3
    check("and the same species wherever the decision is clear",
          np.array_equal(small[0].samples[clear], whole[0].samples[clear]))


def test_thread_count_invariance():
    dtm, chm = scene(192, 4)
    params = init_model(DESK, seed=4)
    cfg = InferConfig(tile_px=64, crop_px=16)
    one = predict_map(dtm, chm, params, DESK, cfg, threads=1)
    four = predict_map(dtm, chm, params, DESK, cfg, threads=4)
    check("one and four threads give identical species", np.array_equal(one[0].samples, four[0].samples))
    check("one and four threads give identical logits",
          all(np.array_equal(a.samples, b.samples) for a, b in zip(one[1], four[1])))


def test_worker_count():
    saved = os.environ.pop(THREADS_ENV, None)
    try:
        check("explicit request wins", worker_count(3) == 3)
        check("at least one worker", worker_count(0) == 1)
        os.environ[THREADS_ENV] = "2"
        check("environment variable used without a request", worker_count() == 2)
        del os.environ[THREADS_ENV]
        check("CPU count otherwise", worker_count() == (os.cpu_count() or 1))
    finally:
        os.environ.pop(THREADS_ENV, None)
        if saved is not None:
            os.environ[THREADS_ENV] = saved


def test_blur_attenuates_spike():
    spike = np.zeros((4, 7, 7))
    spike[1, 3, 3] = 1.0
    out = blur_array(spike, 1.0)
    check("single-pixel logit spike keeps 0.159 at its centre", abs(out[1, 3, 3] - 0.1593) < 1e-4)
    check("other classes untouched", not np.any(out[[0, 2, 3]]))


def test_argmax():
    logits = np.zeros((4, 1, 3), dtype=np.float32)
    logits[:, 0, 1] = [0.0, 1.0, 1.0, 0.0]
    logits[:, 0, 2] = [-1.0, -2.0, -3.0, 0.5]
    check("ties go to the lowest code, else the maximum", argmax_species(logits)[0].tolist() == [0, 1, 3])
    ref = GeoRef(0.0, 1.0, 1.0, 3, 1)
    species = species_from_logits([FloatGrid(ref, logits[c]) for c in range(4)])
    check("species from logit grids", species.samples[0].tolist() == [0, 1, 3] and species.georef == ref)


def test_preview_colours():
    ref = GeoRef(0.0, 1.0, 1.0, 5, 1)
    species = LabelGrid(ref, np.array([[0, 1, 2, 3, 255]], dtype=np.uint8))
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "preview.ppm"
        write_preview(species, path)
        with Image.open(path) as image:
            pixels = [image.getpixel((c, 0)) for c in range(5)]
            size = image.size
    check("preview has the map size", size == (5, 1))
    check("preview uses the class palette", pixels == [PALETTE[c] for c in (0, 1, 2, 3, 255)])


if __name__ == "__main__":
    sys.exit(run_all(globals()))
