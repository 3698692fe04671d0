"""Focal loss, augmentation, tile sampling and the training loop.

Usage:
    uv run scripts/test_training.py
"""

import math
import os
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import numpy as np

from checks import check, raises, run_all
from raster.grid import FloatGrid, GeoRef, LabelGrid
from training import (ClassFrequencyError, CowMixConfig, EpochMetrics, FocalConfig, NoLabeledPixelsError,
                      RegionError, TrainConfig, class_weights, cow_batch_mix, cow_mask, dihedral_augment,
                      dihedral_inverse, focal_loss, read_metrics_csv, sample_train_windows, train_epochs,
                      training_data, validation_windows, write_metrics_csv)
from unet import NetConfig, ShapeError

NO_COWMIX = CowMixConfig(apply_probability=0.0)


def one_pixel(logits, label):
    return np.asarray(logits, dtype=np.float64).reshape(1, 4, 1, 1), np.array([[[label]]], dtype=np.uint8)


def test_class_weights():
    equal = np.repeat(np.arange(4, dtype=np.uint8), 25)
    check("equal counts give unit weights", np.allclose(class_weights(equal), 1.0))
    skewed = np.array([0] * 8 + [1] * 4 + [2] * 2 + [3] * 2, dtype=np.uint8)
    check("frequencies (.5, .25, .125, .125) give (.5, 1, 2, 2)",
          np.allclose(class_weights(skewed), [0.5, 1.0, 2.0, 2.0]))
    with_unlabeled = np.concatenate([skewed, np.full(100, 255, dtype=np.uint8)])
    check("unlabeled pixels are not counted", np.allclose(class_weights(with_unlabeled), [0.5, 1.0, 2.0, 2.0]))
    grid = LabelGrid(GeoRef(0.0, 4.0, 1.0, 4, 4), skewed.reshape(4, 4))
    check("label grids are accepted", np.allclose(class_weights(grid), [0.5, 1.0, 2.0, 2.0]))
    check("a missing class is an error", raises(ClassFrequencyError, class_weights, np.zeros(10, dtype=np.uint8)))


def test_focal_loss_oracles():
    cfg = FocalConfig()
    loss, grad = focal_loss(*one_pixel([60.0, 0.0, 0.0, 0.0], 0), cfg)
    check("certain prediction gives zero loss", loss < 1e-12)
    loss, _ = focal_loss(*one_pixel([math.log(3.0), 0.0, 0.0, 0.0], 0), cfg)
    check("p_t = 0.5, gamma 3 gives 0.086643", abs(loss - 0.086643) < 1e-6, f"{loss:.7f}")
    loss, grad = focal_loss(*one_pixel([math.log(0.27 / 0.91), 0.0, 0.0, 0.0], 0), cfg)
    check("p_t = 0.09 is cut off", loss == 0.0 and not np.any(grad))

    logits = np.zeros((1, 4, 1, 2))
    logits[0, :, 0, 0] = [math.log(3.0), 0.0, 0.0, 0.0]
    logits[0, :, 0, 1] = [math.log(0.27 / 0.91), 0.0, 0.0, 0.0]
    loss, _ = focal_loss(logits, np.zeros((1, 1, 2), dtype=np.uint8), cfg)
    check("cut-off pixels still count in the denominator", abs(loss - 0.086643 / 2) < 1e-6)

    labels = np.array([[[0, 255]]], dtype=np.uint8)
    loss, grad = focal_loss(logits, labels, cfg)
    check("unlabeled pixels are ignored", abs(loss - 0.086643) < 1e-6 and not np.any(grad[..., 1]))
    loss, grad = focal_loss(logits, np.full((1, 1, 2), 255, dtype=np.uint8), cfg)
    check("nothing labeled gives zero loss and gradient", loss == 0.0 and not np.any(grad))

    weighted = FocalConfig(class_weights=(2.0, 1.0, 1.0, 1.0))
    loss, _ = focal_loss(*one_pixel([math.log(3.0), 0.0, 0.0, 0.0], 0), weighted)
    check("class weight scales the pixel loss", abs(loss - 2 * 0.086643) < 2e-6)


def test_gamma_zero_is_cross_entropy():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(2, 4, 5, 5))
    labels = rng.integers(0, 4, size=(2, 5, 5)).astype(np.uint8)
    loss, _ = focal_loss(logits, labels, FocalConfig(gamma=0.0, cutoff_p=0.0))
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    ce = -np.take_along_axis(logp, labels[:, None].astype(np.intp), axis=1).mean()
    check("gamma 0 without cut-off equals mean cross-entropy", abs(loss - ce) < 1e-12)


def test_focal_gradient():
    rng = np.random.default_rng(1)
    labels = rng.integers(0, 4, size=(2, 3, 3)).astype(np.uint8)
    labels[0, 0, 0] = 255
    cut = np.zeros(labels.shape, dtype=bool)
    cut[1, 2, :] = True
    logits = rng.normal(scale=0.3, size=(2, 4, 3, 3))
    target = np.where(labels == 255, 0, labels).astype(np.intp)
    onehot = np.eye(4)[target].transpose(0, 3, 1, 2).astype(bool)
    logits[onehot & ~cut[:, None]] += 2.0
    logits[onehot & cut[:, None]] -= 6.0

    cfg = FocalConfig(class_weights=(0.5, 1.0, 2.0, 1.5))
    _, grad = focal_loss(logits, labels, cfg)
    check("float64 logits give a float64 gradient", grad.dtype == np.float64)
    h = 1e-6
    numeric = np.zeros_like(logits)
    for idx in np.ndindex(logits.shape):
        orig = logits[idx]
        logits[idx] = orig + h
        plus, _ = focal_loss(logits, labels, cfg)
        logits[idx] = orig - h
        minus, _ = focal_loss(logits, labels, cfg)
        logits[idx] = orig
        numeric[idx] = (plus - minus) / (2 * h)
    err = np.abs(grad - numeric) / np.maximum(np.maximum(np.abs(grad), np.abs(numeric)), 1e-4)
    check("gradient matches finite differences", err.max() < 1e-5, f"max error {err.max():.2e}")
    check("cut-off pixels get no gradient", not np.any(grad[1, :, 2, :]))


def test_focal_invariances():
    rng = np.random.default_rng(2)
    logits = rng.normal(size=(1, 4, 8, 8))
    labels = rng.integers(0, 4, size=(1, 8, 8)).astype(np.uint8)
    cfg = FocalConfig()
    base, _ = focal_loss(logits, labels, cfg)
    shifted, _ = focal_loss(logits + rng.normal(size=(1, 1, 8, 8)), labels, cfg)
    check("adding a per-pixel constant to all logits changes nothing", abs(base - shifted) < 1e-12)
    for k in range(8):
        f, lab = dihedral_augment((logits[0], labels[0]), k)
        moved, _ = focal_loss(f[None], lab[None], cfg)
        check(f"dihedral element {k} leaves the loss unchanged", abs(moved - base) < 1e-12)
    check("mismatched labels rejected", raises(ShapeError, focal_loss, logits, labels[:, :4], cfg))
    check("wrong class count rejected", raises(ShapeError, focal_loss, logits[:, :3], labels, cfg))


def test_dihedral_group():
    rng = np.random.default_rng(3)
    features = rng.normal(size=(2, 6, 6))
    labels = rng.integers(0, 4, size=(6, 6)).astype(np.uint8)
    f0, l0 = dihedral_augment((features, labels), 0)
    check("k = 0 is the identity", np.array_equal(f0, features) and np.array_equal(l0, labels))
    images = set()
    for k in range(8):
        f, lab = dihedral_augment((features, labels), k)
        back_f, back_l = dihedral_augment((f, lab), dihedral_inverse(k))
        check(f"element {k} followed by its inverse restores the sample",
              np.array_equal(back_f, features) and np.array_equal(back_l, labels))
        check(f"element {k} moves features and labels together",
              np.array_equal(dihedral_augment((labels[None].astype(float), labels), k)[0][0], lab))
        images.add(lab.tobytes())
    check("the eight elements are distinct", len(images) == 8)

    marker = np.zeros((1, 5, 5))
    marker[0, 0, 0] = 1.0
    turned, _ = dihedral_augment((marker, np.zeros((5, 5), dtype=np.uint8)), 1)
    check("quarter turn sends pixel (0, 0) to (0, H-1)", turned[0, 0, 4] == 1.0)
    check("non-square tiles rejected",
          raises(ShapeError, dihedral_augment, (np.zeros((2, 4, 6)), np.zeros((4, 6))), 1))
    check("index 8 rejected", raises(ValueError, dihedral_augment, (features, labels), 8))


def edge_length(mask):
    return int(np.count_nonzero(mask[1:] != mask[:-1]) + np.count_nonzero(mask[:, 1:] != mask[:, :-1]))


def test_cow_mask():
    half = CowMixConfig(keep_fraction_range=(0.5, 0.5))
    fraction = cow_mask(128, 128, half, seed=4).mean()
    check("keep fraction 0.5 gives half the pixels", abs(fraction - 0.5) <= 0.02, f"{fraction:.3f}")
    check("same seed gives the same mask", np.array_equal(cow_mask(64, 64, half, 9), cow_mask(64, 64, half, 9)))
    fine = CowMixConfig(sigma_range_px=(8.0, 8.0), keep_fraction_range=(0.5, 0.5))
    coarse = CowMixConfig(sigma_range_px=(32.0, 32.0), keep_fraction_range=(0.5, 0.5))
    fine_edges = sum(edge_length(cow_mask(128, 128, fine, s)) for s in range(20))
    coarse_edges = sum(edge_length(cow_mask(128, 128, coarse, s)) for s in range(20))
    check("larger sigma gives fewer boundary pixels", coarse_edges < fine_edges, f"{coarse_edges} vs {fine_edges}")
    check("tiny tiles rejected", raises(ShapeError, cow_mask, 4, 4, half))
    check("keep fraction 1 rejected", raises(ValueError, CowMixConfig, keep_fraction_range=(0.5, 1.0)))


def test_cow_mix():
    rng = np.random.default_rng(5)
    a = (rng.normal(size=(2, 16, 16)), rng.integers(0, 4, size=(16, 16)).astype(np.uint8))
    b = (rng.normal(size=(2, 16, 16)), rng.integers(0, 4, size=(16, 16)).astype(np.uint8))
    ones, zeros = np.ones((16, 16), dtype=bool), np.zeros((16, 16), dtype=bool)
    mixed = cow_batch_mix(a, b, ones)
    check("all-ones mask gives a", np.array_equal(mixed[0], a[0]) and np.array_equal(mixed[1], a[1]))
    mixed = cow_batch_mix(a, b, zeros)
    check("all-zeros mask gives b", np.array_equal(mixed[0], b[0]) and np.array_equal(mixed[1], b[1]))
    mask = cow_mask(16, 16, CowMixConfig(sigma_range_px=(2.0, 4.0)), seed=1)
    _, labels = cow_batch_mix(a, b, mask)
    expected = np.bincount(a[1][mask], minlength=4) + np.bincount(b[1][~mask], minlength=4)
    check("class counts split along the mask", np.array_equal(np.bincount(labels.ravel(), minlength=4), expected))
    check("shape mismatch rejected", raises(ShapeError, cow_batch_mix, a, (b[0][:, :8], b[1]), ones))


def disc_scene(size=128, seed=0):
    """Flat-ish ground with crowns whose height decides the class."""
    rng = np.random.default_rng(seed)
    ref = GeoRef(0.0, float(size), 1.0, size, size)
    dtm = 100.0 + rng.normal(scale=0.2, size=(size, size))
    chm = np.zeros((size, size))
    rows, cols = np.mgrid[0:size, 0:size]
    for height in (5.0, 12.0, 20.0) * 6:
        r, c = rng.uniform(8, size - 8, size=2)
        disc = (rows - r) ** 2 + (cols - c) ** 2 < 6.0 ** 2
        chm[disc] = height
    labels = np.zeros((size, size), dtype=np.uint8)
    labels[chm == 5.0] = 1
    labels[chm == 12.0] = 2
    labels[chm == 20.0] = 3
    labels[chm < 0.3] = 0
    return training_data(FloatGrid(ref, dtm), FloatGrid(ref, chm), LabelGrid(ref, labels))


def test_overfit_single_tile():
    data = disc_scene()
    train = TrainConfig(tile_px=128, batch_size=1, epochs=50, seed=0, learning_rate=1e-2, tiles_per_epoch=1,
                        dihedral=False)
    _, metrics = train_epochs(data, train, NetConfig(depth=3, base_filters=8), FocalConfig(), NO_COWMIX)
    first, last = metrics[0].train_loss, metrics[-1].train_loss
    check("50 epochs on one tile drive the loss below a tenth of the first", last < 0.1 * first,
          f"{first:.4f} -> {last:.4f}")
    check("no validation regions gives NaN validation loss", all(math.isnan(m.val_loss) for m in metrics))


def test_training_determinism():
    data = disc_scene(64, seed=1)
    train = TrainConfig(tile_px=32, batch_size=2, epochs=2, seed=7, tiles_per_epoch=4, val_regions=((32, 32, 32, 32),))
    net = NetConfig(depth=2, base_filters=4)
    cow = CowMixConfig(sigma_range_px=(4.0, 8.0), apply_probability=1.0)
    a, metrics_a = train_epochs(data, train, net, FocalConfig(), cow)
    b, metrics_b = train_epochs(data, train, net, FocalConfig(), cow)
    check("same seed gives identical parameter checksums", a.checksum() == b.checksum())
    check("same seed gives identical losses", metrics_a == metrics_b)
    check("validation loss is reported", all(math.isfinite(m.val_loss) for m in metrics_a))
    check("tile size must suit the network",
          raises(ShapeError, train_epochs, data, TrainConfig(tile_px=31), net, FocalConfig(), cow))


def test_regions():
    data = disc_scene(64, seed=2)
    net = NetConfig(depth=2, base_filters=2)
    outside = TrainConfig(tile_px=32, epochs=1, val_regions=((48, 0, 32, 32),))
    check("region outside the scene rejected", raises(RegionError, train_epochs, data, outside, net,
                                                      FocalConfig(), NO_COWMIX))
    small = TrainConfig(tile_px=32, epochs=1, val_regions=((0, 0, 16, 16),))
    check("region smaller than a tile rejected", raises(RegionError, train_epochs, data, small, net,
                                                        FocalConfig(), NO_COWMIX))
    blocking = TrainConfig(tile_px=32, epochs=1, tiles_per_epoch=1, val_regions=((16, 16, 32, 32),))
    check("no room for training tiles rejected", raises(RegionError, train_epochs, data, blocking, net,
                                                        FocalConfig(), NO_COWMIX))

    ref = GeoRef(0.0, 64.0, 1.0, 64, 64)
    flat = FloatGrid(ref, np.zeros((64, 64)))
    empty = training_data(flat, flat, LabelGrid(ref, np.full((64, 64), 255, dtype=np.uint8)))
    check("no labeled pixel rejected", raises(NoLabeledPixelsError, train_epochs, empty,
                                              TrainConfig(tile_px=32, epochs=1), net, FocalConfig(), NO_COWMIX))


def test_validation_windows_are_disjoint():
    region = (64, 32, 96, 64)
    windows = validation_windows([region], 32)
    check("validation tiles tile the region", len(windows) == 6
          and all(64 <= c and c + 32 <= 160 and 32 <= r and r + 32 <= 96 for r, c in windows))
    rng = np.random.default_rng(6)
    train = sample_train_windows((256, 256), [region], 32, 300, rng)
    intersect = [(r, c) for r, c in train if r < 96 and 32 < r + 32 and c < 160 and 64 < c + 32]
    check("training tiles never intersect the validation region", not intersect)


def test_metrics_csv():
    metrics = [EpochMetrics(1, 0.5, float("nan")), EpochMetrics(2, 0.25, 0.3)]
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "metrics.csv"
        write_metrics_csv(metrics, path)
        back = read_metrics_csv(path)
    check("epochs and train losses survive", [(m.epoch, m.train_loss) for m in back] == [(1, 0.5), (2, 0.25)])
    check("NaN validation loss survives", math.isnan(back[0].val_loss) and back[1].val_loss == 0.3)


if __name__ == "__main__":
    sys.exit(run_all(globals()))
