"""Label pre-processing and round-2 relabel against brute-force oracles.

Usage:
    uv run scripts/test_labels.py
"""

import os
import sys
from collections import deque

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import numpy as np

from checks import check, raises, run_all
from labels import (ExtentMismatchError, PrepConfig, apply_land_mask, label_stats, prep_labels, relabel_round2,
                    weak_species_map)
from raster.filters import compute_chm
from raster.grid import FloatGrid, GeoRef, LabelGrid
from synth import SceneSpec, gen_scene

NEIGHBOURS_8 = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)]


def grids(weak: np.ndarray, chm: np.ndarray):
    rows, cols = weak.shape
    ref16 = GeoRef(500000.0, 7000000.0, 16.0, cols, rows)
    return LabelGrid(ref16, weak), FloatGrid(ref16.scaled(16), chm)


def prep_oracle(weak: np.ndarray, chm: np.ndarray, window: int = 11, threshold: float = 0.3) -> np.ndarray:
    rows, cols = weak.shape
    step1 = np.where(weak == 255, 0, weak)
    step2 = step1.copy()
    for r in range(rows):
        for c in range(cols):
            forest = 1 <= step1[r, c] <= 3
            for dr, dc in NEIGHBOURS_8:
                rr, cc = r + dr, c + dc
                if 0 <= rr < rows and 0 <= cc < cols and (1 <= step1[rr, cc] <= 3) != forest:
                    step2[r, c] = 255
                    break
    step3 = np.zeros((rows * 16, cols * 16), dtype=np.uint8)
    for r in range(rows):
        for c in range(cols):
            step3[r * 16:(r + 1) * 16, c * 16:(c + 1) * 16] = step2[r, c]
    half = window // 2
    padded = np.pad(chm, half, mode="reflect")
    out = step3.copy()
    for r in range(chm.shape[0]):
        for c in range(chm.shape[1]):
            values = np.sort(padded[r:r + window, c:c + window].ravel())
            if values[values.size // 2] < np.float32(threshold):
                out[r, c] = 0
    return out


def random_weak(rng, rows, cols):
    return rng.choice(np.array([0, 1, 2, 3, 255], dtype=np.uint8), size=(rows, cols), p=[0.3, 0.2, 0.2, 0.2, 0.1])


def random_chm(rng, rows, cols):
    chm = rng.uniform(0.0, 20.0, size=(rows * 16, cols * 16)).astype(np.float32)
    chm[rng.random(chm.shape) < 0.5] = 0.0
    return chm


def test_prep_matches_step_oracle():
    rng = np.random.default_rng(11)
    for trial in range(6):
        weak, chm = random_weak(rng, 4, 5), random_chm(rng, 4, 5)
        out = prep_labels(*grids(weak, chm), PrepConfig())
        check(f"random trial {trial} matches the four-step oracle", np.array_equal(out.samples, prep_oracle(weak, chm)))


def test_prep_output_geometry():
    rng = np.random.default_rng(1)
    weak, chm = random_weak(rng, 3, 4), random_chm(rng, 3, 4)
    weak_grid, chm_grid = grids(weak, chm)
    out = prep_labels(weak_grid, chm_grid, PrepConfig())
    check("labels take the feature georef", out.georef == chm_grid.georef)
    check("no species is invented", set(np.unique(out.samples)) <= set(np.unique(weak)) | {0, 255})


def test_prep_examples():
    tall = np.full((48, 48), 10.0, dtype=np.float32)
    out = prep_labels(*grids(np.full((3, 3), 255, dtype=np.uint8), tall), PrepConfig())
    check("unlabeled map over tall canopy becomes background", np.all(out.samples == 0))

    weak = np.zeros((3, 3), dtype=np.uint8)
    weak[1, 1] = 3
    out = prep_labels(*grids(weak, tall), PrepConfig())
    check("spruce cell next to background is unlabeled", np.all(out.samples == 255))

    weak = np.full((3, 3), 3, dtype=np.uint8)
    flat = np.zeros((48, 48), dtype=np.float32)
    out = prep_labels(*grids(weak, flat), PrepConfig())
    check("interior spruce over flat ground becomes background", np.all(out.samples == 0))

    out = prep_labels(*grids(weak, tall), PrepConfig())
    check("interior spruce over tall canopy stays spruce", np.all(out.samples == 3))


def test_block_upsampling_is_exact():
    weak = np.array([[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 3, 3]], dtype=np.uint8)
    tall = np.full((48, 64), 15.0, dtype=np.float32)
    out = prep_labels(*grids(weak, tall), PrepConfig()).samples
    check("every 16x16 block is constant", all(
        np.all(out[r * 16:(r + 1) * 16, c * 16:(c + 1) * 16] == out[r * 16, c * 16])
        for r in range(3) for c in range(4)))
    check("forest/forest borders keep their species", out[0, 0] == 1 and out[0, 63] == 2 and out[47, 0] == 3)


def test_weak_species_map():
    weak = np.array([[0, 1, 255], [2, 3, 255]], dtype=np.uint8)
    ref16 = GeoRef(500000.0, 7000000.0, 16.0, 3, 2)
    out = weak_species_map(LabelGrid(ref16, weak))
    check("weak map becomes a 1 m grid over the same extent", out.georef == ref16.scaled(16) and out.samples.shape == (32, 48))
    check("no label scores as background", np.all(out.samples[:, 32:] == 0))
    check("each cell becomes a constant 16x16 block", np.all(out.samples[16:, 16:32] == 3) and np.all(out.samples[:16, 16:32] == 1))


def test_low_canopy_overrides_unlabeled():
    weak = np.zeros((3, 3), dtype=np.uint8)
    weak[1, 1] = 2
    chm = np.full((48, 48), 12.0, dtype=np.float32)
    chm[:, :8] = 0.0
    out = prep_labels(*grids(weak, chm), PrepConfig()).samples
    check("border pixels over bare ground are background, not unlabeled", np.all(out[:, :2] == 0))
    check("border pixels over canopy stay unlabeled", np.all(out[:, 20:] == 255))


def test_extent_mismatch():
    weak = LabelGrid(GeoRef(0.0, 64.0, 16.0, 4, 4), np.zeros((4, 4), dtype=np.uint8))
    chm = FloatGrid(GeoRef(0.0, 64.0, 1.0, 60, 64), np.zeros((64, 60), dtype=np.float32))
    check("width off by 4 px rejected", raises(ExtentMismatchError, prep_labels, weak, chm, PrepConfig()))
    shifted = FloatGrid(GeoRef(8.0, 64.0, 1.0, 64, 64), np.zeros((64, 64), dtype=np.float32))
    check("shifted origin rejected", raises(ExtentMismatchError, prep_labels, weak, shifted, PrepConfig()))
    check("even median window rejected", raises(ValueError, PrepConfig, chm_median_window_px=10))


def test_land_mask():
    ref = GeoRef(0.0, 8.0, 1.0, 8, 8)
    labels = LabelGrid(ref, np.random.default_rng(0).choice(4, size=(8, 8)).astype(np.uint8))
    ones = LabelGrid(ref, np.ones((8, 8), dtype=np.uint8))
    check("all-land mask is the identity", np.array_equal(apply_land_mask(labels, ones).samples, labels.samples))
    zeros = LabelGrid(ref, np.zeros((8, 8), dtype=np.uint8))
    check("all-water mask unlabels everything", np.all(apply_land_mask(labels, zeros).samples == 255))
    checker = LabelGrid(ref, (np.indices((8, 8)).sum(axis=0) % 2).astype(np.uint8))
    masked = apply_land_mask(labels, checker).samples
    water = checker.samples == 0
    check("checkerboard changes exactly the water half",
          np.all(masked[water] == 255) and np.array_equal(masked[~water], labels.samples[~water]))
    other = LabelGrid(GeoRef(1.0, 8.0, 1.0, 8, 8), np.ones((8, 8), dtype=np.uint8))
    check("mask with other geometry rejected", raises(ExtentMismatchError, apply_land_mask, labels, other))


def components_oracle(labels: np.ndarray, predictions: np.ndarray, min_pixels: int) -> np.ndarray:
    forest_l = (labels >= 1) & (labels <= 3)
    forest_p = (predictions >= 1) & (predictions <= 3)
    conflict = ((labels == 0) & forest_p) | (forest_l & (predictions == 0))
    seen = np.zeros(conflict.shape, dtype=bool)
    out = labels.copy()
    rows, cols = conflict.shape
    for r0 in range(rows):
        for c0 in range(cols):
            if not conflict[r0, c0] or seen[r0, c0]:
                continue
            members = []
            queue = deque([(r0, c0)])
            seen[r0, c0] = True
            while queue:
                r, c = queue.popleft()
                members.append((r, c))
                for dr, dc in NEIGHBOURS_8:
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < rows and 0 <= cc < cols and conflict[rr, cc] and not seen[rr, cc]:
                        seen[rr, cc] = True
                        queue.append((rr, cc))
            if len(members) >= min_pixels:
                for r, c in members:
                    out[r, c] = 255
    return out


def test_relabel_threshold():
    ref = GeoRef(0.0, 400.0, 1.0, 400, 400)
    labels = np.full((400, 400), 3, dtype=np.uint8)
    predictions = labels.copy()
    labels[0:150, 0:200] = 0
    labels[250:350, 0:200] = 0
    out = relabel_round2(LabelGrid(ref, labels), LabelGrid(ref, predictions), PrepConfig()).samples
    check("30000 m2 background/forest conflict is unlabeled", np.all(out[0:150, 0:200] == 255))
    check("20000 m2 conflict is unchanged", np.all(out[250:350, 0:200] == 0))
    check("agreeing forest untouched", np.all(out[160:240, :] == 3))

    exact = np.full((200, 200), 1, dtype=np.uint8)
    preds = exact.copy()
    preds[0:160, 0:160] = 0
    out = relabel_round2(LabelGrid(GeoRef(0.0, 200.0, 1.0, 200, 200), exact),
                         LabelGrid(GeoRef(0.0, 200.0, 1.0, 200, 200), preds), PrepConfig()).samples
    check("component of exactly 25600 m2 qualifies", np.all(out[0:160, 0:160] == 255))


def test_relabel_ignores_species_conflicts():
    ref = GeoRef(0.0, 300.0, 1.0, 300, 300)
    labels = np.full((300, 300), 3, dtype=np.uint8)
    predictions = np.full((300, 300), 2, dtype=np.uint8)
    out = relabel_round2(LabelGrid(ref, labels), LabelGrid(ref, predictions), PrepConfig()).samples
    check("spruce labels predicted pine are unchanged", np.array_equal(out, labels))


def test_relabel_matches_flood_fill():
    rng = np.random.default_rng(5)
    cfg = PrepConfig(relabel_min_area_m2=12.0)
    for trial in range(5):
        coarse = rng.choice(np.array([0, 1, 2, 3, 255], dtype=np.uint8), size=(12, 12))
        labels = np.repeat(np.repeat(coarse, 3, axis=0), 3, axis=1)
        predictions = rng.choice(4, size=labels.shape).astype(np.uint8)
        ref = GeoRef(0.0, 36.0, 1.0, 36, 36)
        out = relabel_round2(LabelGrid(ref, labels), LabelGrid(ref, predictions), cfg)
        check(f"trial {trial} equals the flood-fill oracle", np.array_equal(out.samples,
                                                                            components_oracle(labels, predictions, 12)))
        changed = out.samples != labels
        check(f"trial {trial} only removes labels", np.all(out.samples[changed] == 255)
              and label_stats(out)["labeled_pixels"] <= label_stats(LabelGrid(ref, labels))["labeled_pixels"])


def test_missing_forest_patch_is_relabeled():
    for seed in (1, 2, 3):
        spec = SceneSpec(seed=seed, extent_m=512, open_stand_fraction=0.0, clearcut_fraction=0.2,
                         stale_fraction=0.0, n_plots=0)
        scene = gen_scene(spec)
        labels1 = prep_labels(scene.weak16, compute_chm(scene.dsm, scene.dtm), PrepConfig())
        labels2 = relabel_round2(labels1, scene.truth, PrepConfig()).samples
        patch = np.kron(scene.missing16, np.ones((16, 16), dtype=bool))
        removed = (labels2 == 255) & (labels1.samples != 255)
        inside = int(np.count_nonzero(removed & patch))
        check(f"seed {seed}: forest missing from the map is unlabeled in round 2", inside >= 25600,
              f"{inside} px of {int(patch.sum())}")
        check(f"seed {seed}: only background labels over canopy are removed inside the patch",
              np.all(labels1.samples[removed & patch] == 0) and np.all(scene.truth.samples[removed & patch] != 0))


def test_relabel_rejects_unlabeled_predictions():
    ref = GeoRef(0.0, 4.0, 1.0, 4, 4)
    labels = LabelGrid(ref, np.zeros((4, 4), dtype=np.uint8))
    predictions = LabelGrid(ref, np.full((4, 4), 255, dtype=np.uint8))
    check("prediction with 255 rejected", raises(ValueError, relabel_round2, labels, predictions, PrepConfig()))
    other = LabelGrid(GeoRef(0.0, 4.0, 1.0, 4, 4).scaled(2), np.zeros((8, 8), dtype=np.uint8))
    check("prediction on another grid rejected", raises(ExtentMismatchError, relabel_round2, labels, other, PrepConfig()))


def test_label_stats():
    ref = GeoRef(0.0, 10.0, 2.0, 5, 5)
    codes = np.zeros((5, 5), dtype=np.uint8)
    codes[0] = 255
    stats = label_stats(LabelGrid(ref, codes))
    check("labeled pixels", stats["labeled_pixels"] == 20)
    check("labeled area in m2", stats["labeled_area_m2"] == 80.0)
    check("labeled fraction", abs(stats["labeled_fraction"] - 0.8) < 1e-12)


if __name__ == "__main__":
    sys.exit(run_all(globals()))
