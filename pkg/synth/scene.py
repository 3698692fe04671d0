"""Procedural forest scenes: terrain, stands, trees, weak labels and plots.

The scene stands in for the national lidar, forest-map and inventory data.
It reproduces the error modes the label refinement has to cope with: 16 m
rounding of stand borders, forest-map coverage limited to forest, labels that
are older than the lidar (canopy already cut, label still says forest) and
forest missing from the map.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree

from evaluation.plots import PlotRecord, dominant_class, plot_pixels
from raster.grid import (BACKGROUND, BIRCH, NORWAY_SPRUCE, NUM_CLASSES, SCOTS_PINE, UNLABELED,
                         FloatGrid, GeoRef, LabelGrid)
from .terrain import terrain

logger = logging.getLogger(__name__)

LABEL_CELL_M = 16

# Crown radius as a fraction of tree height, per species code.
CROWN_RADIUS_RATIO = {BIRCH: 0.22, SCOTS_PINE: 0.26, NORWAY_SPRUCE: 0.16}
MIN_CROWN_RADIUS_M = 1.0

# Injected clearcut / missing-forest patches, side length in 16 m cells.
# Even the smallest keeps a (side - 2)-cell core above the 25600 m2 relabel
# area once prep has unlabeled the ring on both sides of its border.
PATCH_MIN_CELLS = 16
PATCH_MAX_CELLS = 24
PLACEMENT_ATTEMPTS_PER_PLOT = 1000


class SceneSpecError(ValueError):
    pass


class PlotPlacementError(RuntimeError):
    """Could not fit the requested number of disjoint plots."""


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 0
    extent_m: int = 1024
    stand_scale_m: float = 150.0
    density_per_ha: float = 500.0
    species_mix: Tuple[float, float, float] = (0.3, 0.35, 0.35)
    clearcut_fraction: float = 0.0
    height_ranges: Tuple[Tuple[float, float], ...] = ((8.0, 20.0), (10.0, 25.0), (10.0, 28.0))
    stand_purity: float = 0.85
    open_stand_fraction: float = 0.25
    terrain_relief_m: float = 30.0
    base_elevation_m: float = 100.0
    water_fraction: float = 0.0
    unlabeled_open_fraction: float = 0.0
    stale_fraction: float = 0.5
    n_plots: int = 200
    plot_area_m2: float = 250.0
    origin_x: float = 600000.0
    origin_y: float = 6600000.0

    def __post_init__(self):
        if self.extent_m < LABEL_CELL_M:
            raise SceneSpecError(f"extent_m {self.extent_m} is smaller than one {LABEL_CELL_M} m label cell")
        if self.extent_m % LABEL_CELL_M:
            raise SceneSpecError(f"extent_m must be a multiple of {LABEL_CELL_M}, got {self.extent_m}")
        if len(self.species_mix) != 3 or min(self.species_mix) < 0 or not math.isclose(sum(self.species_mix), 1.0):
            raise SceneSpecError(f"species_mix must be 3 probabilities summing to 1, got {self.species_mix}")
        if not 0 <= self.clearcut_fraction < 0.5:
            raise SceneSpecError(f"clearcut_fraction must be in [0, 0.5), got {self.clearcut_fraction}")
        if len(self.height_ranges) != 3 or any(not 0 < lo <= hi for lo, hi in self.height_ranges):
            raise SceneSpecError(f"height_ranges must be 3 intervals 0 < min <= max, got {self.height_ranges}")
        if self.density_per_ha < 0 or self.stand_scale_m <= 0:
            raise SceneSpecError("density_per_ha must be >= 0 and stand_scale_m > 0")
        if not 0 <= self.terrain_relief_m <= 40:
            raise SceneSpecError(f"terrain_relief_m must be within [0, 40], got {self.terrain_relief_m}")
        for name in ("stand_purity", "open_stand_fraction", "unlabeled_open_fraction", "stale_fraction"):
            if not 0 <= getattr(self, name) <= 1:
                raise SceneSpecError(f"{name} must be within [0, 1]")
        if not 0 <= self.water_fraction < 0.5:
            raise SceneSpecError(f"water_fraction must be in [0, 0.5), got {self.water_fraction}")

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> "SceneSpec":
        values = dict(config or {})
        if "species_mix" in values:
            values["species_mix"] = tuple(float(p) for p in values["species_mix"])
        if "height_ranges" in values:
            values["height_ranges"] = tuple((float(lo), float(hi)) for lo, hi in values["height_ranges"])
        return cls(**values)

    def height_range(self, species: int) -> Tuple[float, float]:
        return self.height_ranges[species - 1]


@dataclass(frozen=True)
class TreeTable:
    """One row per tree; x/y in pixel coordinates of the 1 m grid."""
    x: np.ndarray
    y: np.ndarray
    height: np.ndarray
    crown_radius: np.ndarray
    species: np.ndarray
    stand: np.ndarray

    def __len__(self) -> int:
        return len(self.x)


@dataclass(frozen=True)
class SynthScene:
    dtm: FloatGrid
    dsm: FloatGrid
    truth: LabelGrid
    survey_truth: LabelGrid
    land_mask: LabelGrid
    stand_id: np.ndarray = field(repr=False)
    stand_species: np.ndarray = field(repr=False)
    trees: TreeTable = field(repr=False)
    missing16: np.ndarray = field(repr=False)
    weak16: Optional[LabelGrid] = None
    plots: Tuple[PlotRecord, ...] = ()

    @property
    def georef16(self) -> GeoRef:
        ref = self.truth.georef
        return GeoRef(ref.origin_x, ref.origin_y, ref.pixel_size * LABEL_CELL_M,
                      ref.width // LABEL_CELL_M, ref.height // LABEL_CELL_M)


def _crown_surface(species: int, t: np.ndarray, height: float) -> np.ndarray:
    """Crown height at normalized distance t = d / r in [0, 1)."""
    if species == NORWAY_SPRUCE:
        return height * (1.0 - 0.8 * t)
    if species == SCOTS_PINE:
        return height * (1.0 - 0.35 * t * t)
    return height * (0.5 + 0.5 * np.sqrt(1.0 - t * t))


def _assign_stands(spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    n = spec.extent_m
    area = float(n * n)
    n_stands = max(1, int(round(area / (math.pi * (spec.stand_scale_m / 2.0) ** 2))))
    centers = rng.uniform(0.0, n, size=(n_stands, 2))
    rows, cols = np.mgrid[0:n, 0:n]
    points = np.column_stack([cols.ravel() + 0.5, rows.ravel() + 0.5])
    _, stand = cKDTree(centers).query(points)
    return stand.reshape(n, n).astype(np.int32)


def _plant_trees(spec: SceneSpec, rng: np.random.Generator, stand_id: np.ndarray,
                 stand_species: np.ndarray, land: np.ndarray) -> TreeTable:
    flat = stand_id.ravel()
    order = np.argsort(flat, kind="stable")
    order = order[land.ravel()[order]]
    bounds = np.searchsorted(flat[order], np.arange(len(stand_species) + 1))
    mix = np.asarray(spec.species_mix, dtype=np.float64)
    ranges = np.asarray(spec.height_ranges, dtype=np.float64)
    ratios = np.zeros(NUM_CLASSES, dtype=np.float64)
    for code, ratio in CROWN_RADIUS_RATIO.items():
        ratios[code] = ratio
    columns: Dict[str, List[np.ndarray]] = {k: [] for k in ("x", "y", "height", "radius", "species", "stand")}

    for s, dominant in enumerate(stand_species):
        if dominant == BACKGROUND:
            continue
        pixels = order[bounds[s]:bounds[s + 1]]
        count = int(round(spec.density_per_ha * len(pixels) / 10000.0))
        if count == 0:
            continue
        chosen = rng.choice(pixels, size=count, replace=True)
        rows, cols = np.divmod(chosen, spec.extent_m)
        pure = rng.random(count) < spec.stand_purity
        species = np.where(pure, dominant, rng.choice(3, size=count, p=mix) + 1).astype(np.uint8)
        lo, hi = ranges[species - 1, 0], ranges[species - 1, 1]
        height = lo + (hi - lo) * rng.random(count)
        ratio = ratios[species]
        columns["x"].append(cols + rng.random(count))
        columns["y"].append(rows + rng.random(count))
        columns["height"].append(height)
        columns["radius"].append(np.maximum(ratio * height, MIN_CROWN_RADIUS_M))
        columns["species"].append(species)
        columns["stand"].append(np.full(count, s, dtype=np.int32))

    def cat(key, dtype):
        return np.concatenate(columns[key]).astype(dtype) if columns[key] else np.zeros(0, dtype=dtype)

    return TreeTable(x=cat("x", np.float64), y=cat("y", np.float64), height=cat("height", np.float64),
                     crown_radius=cat("radius", np.float64), species=cat("species", np.uint8),
                     stand=cat("stand", np.int32))


def render_crowns(trees: TreeTable, shape: Tuple[int, int]) -> Tuple[np.ndarray, np.ndarray]:
    """Canopy height (max over crowns) and species of the tallest covering tree.

    A pixel is covered when its centre is strictly inside the crown radius.
    Trees are drawn in table order; equal heights keep the earlier tree.
    """
    height_px, width_px = shape
    canopy = np.zeros(shape, dtype=np.float64)
    top = np.zeros(shape, dtype=np.float64)
    species_map = np.zeros(shape, dtype=np.uint8)
    for x, y, h, r, sp in zip(trees.x, trees.y, trees.height, trees.crown_radius, trees.species):
        r0, r1 = max(0, int(math.floor(y - r))), min(height_px, int(math.ceil(y + r)) + 1)
        c0, c1 = max(0, int(math.floor(x - r))), min(width_px, int(math.ceil(x + r)) + 1)
        if r0 >= r1 or c0 >= c1:
            continue
        dy = np.arange(r0, r1) + 0.5 - y
        dx = np.arange(c0, c1) + 0.5 - x
        t = np.sqrt(dy[:, None] ** 2 + dx[None, :] ** 2) / r
        covered = t < 1.0
        z = np.where(covered, _crown_surface(int(sp), np.minimum(t, 1.0), h), 0.0)
        window = canopy[r0:r1, c0:c1]
        np.maximum(window, z, out=window)
        taller = covered & (h > top[r0:r1, c0:c1])
        top[r0:r1, c0:c1][taller] = h
        species_map[r0:r1, c0:c1][taller] = sp
    return canopy, species_map


def block_majority(codes: np.ndarray, factor: int) -> np.ndarray:
    """Majority class 0-3 of every ``factor`` x ``factor`` block; ties go to the lowest code."""
    h, w = codes.shape
    blocks = codes.reshape(h // factor, factor, w // factor, factor).transpose(0, 2, 1, 3)
    blocks = blocks.reshape(h // factor, w // factor, factor * factor)
    counts = np.stack([(blocks == c).sum(axis=-1) for c in range(NUM_CLASSES)], axis=-1)
    return np.argmax(counts, axis=-1).astype(np.uint8)


def _plan_patches(spec: SceneSpec, rng: np.random.Generator,
                  forest16: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Square patches of forest cells: (stale cells, missing-forest cells)."""
    stale = np.zeros(forest16.shape, dtype=bool)
    missing = np.zeros(forest16.shape, dtype=bool)
    target = spec.clearcut_fraction * forest16.sum()
    if target <= 0:
        return stale, missing
    n_rows, n_cols = forest16.shape
    # Small scenes get patches of at most half their side.
    hi = min(PATCH_MAX_CELLS, max(1, min(n_rows, n_cols) // 2))
    lo = min(PATCH_MIN_CELLS, hi)
    covered = 0
    for _ in range(10000):
        if covered >= target:
            break
        side = int(rng.integers(lo, hi + 1))
        r0 = int(rng.integers(0, max(1, n_rows - side + 1)))
        c0 = int(rng.integers(0, max(1, n_cols - side + 1)))
        patch = np.zeros(forest16.shape, dtype=bool)
        patch[r0:r0 + side, c0:c0 + side] = True
        patch &= forest16 & ~stale & ~missing
        if not patch.any():
            continue
        # Each patch goes to the kind that is behind its share; ties are drawn.
        behind = spec.stale_fraction * covered - stale.sum()
        if behind > 0 or (behind == 0 and rng.random() < spec.stale_fraction):
            stale |= patch
        else:
            missing |= patch
        covered += int(patch.sum())
    logger.info("Injected label/lidar mismatch on %d stale and %d missing-forest cells (%.1f%% of forest)",
                int(stale.sum()), int(missing.sum()), 100.0 * covered / max(1, forest16.sum()))
    return stale, missing


def gen_scene(spec: SceneSpec) -> SynthScene:
    """Build a complete scene; a pure function of ``spec`` (and its seed)."""
    rng = np.random.default_rng(spec.seed)
    n = spec.extent_m
    georef = GeoRef(spec.origin_x, spec.origin_y, 1.0, n, n)

    dtm = terrain((n, n), rng, spec.base_elevation_m, spec.terrain_relief_m)
    land = np.ones((n, n), dtype=bool)
    if spec.water_fraction > 0:
        level = np.quantile(dtm, spec.water_fraction)
        land = dtm > level
        dtm = np.where(land, dtm, level)

    stand_id = _assign_stands(spec, rng)
    n_stands = int(stand_id.max()) + 1
    is_open = rng.random(n_stands) < spec.open_stand_fraction
    dominant = rng.choice(3, size=n_stands, p=np.asarray(spec.species_mix)) + 1
    stand_species = np.where(is_open, BACKGROUND, dominant).astype(np.uint8)

    trees = _plant_trees(spec, rng, stand_id, stand_species, land)
    canopy, truth = render_crowns(trees, (n, n))
    canopy[~land] = 0.0
    truth[~land] = BACKGROUND
    survey_truth = truth.copy()
    logger.info("Scene %dx%d m: %d stands, %d trees", n, n, n_stands, len(trees))

    stale16, missing16 = _plan_patches(spec, rng, block_majority(survey_truth, LABEL_CELL_M) != BACKGROUND)
    stale = np.kron(stale16, np.ones((LABEL_CELL_M, LABEL_CELL_M), dtype=bool)).astype(bool)
    canopy[stale] = 0.0
    truth[stale] = BACKGROUND

    dtm32 = dtm.astype(np.float32)
    dsm32 = (dtm + canopy).astype(np.float32)
    scene = SynthScene(
        dtm=FloatGrid(georef, dtm32),
        dsm=FloatGrid(georef, np.maximum(dsm32, dtm32)),
        truth=LabelGrid(georef, truth),
        survey_truth=LabelGrid(georef, survey_truth),
        land_mask=LabelGrid(georef, land.astype(np.uint8)),
        stand_id=stand_id,
        stand_species=stand_species,
        trees=trees,
        missing16=missing16,
    )
    scene = replace(scene, weak16=degrade_labels(scene, spec))
    if spec.n_plots > 0:
        scene = replace(scene, plots=tuple(sample_plots(scene, spec.n_plots, spec.plot_area_m2, spec.seed)))
    return scene


def degrade_labels(scene: SynthScene, spec: SceneSpec) -> LabelGrid:
    """16 m weak labels: survey-time majority, missing-forest patches, absent coverage.

    Cells inside stale patches keep their survey species (their canopy was cut
    in ``gen_scene``); missing-forest cells become background; a share of the
    forest-free cells carries no label at all.
    """
    if scene.survey_truth.georef.width != spec.extent_m:
        raise SceneSpecError("scene does not match its spec")
    weak = block_majority(scene.survey_truth.samples, LABEL_CELL_M)
    weak[scene.missing16 & (weak != BACKGROUND)] = BACKGROUND

    if spec.unlabeled_open_fraction > 0:
        forest_count = (scene.survey_truth.samples != BACKGROUND).reshape(
            weak.shape[0], LABEL_CELL_M, weak.shape[1], LABEL_CELL_M).sum(axis=(1, 3))
        rng = np.random.default_rng([spec.seed, 16])
        drop = (forest_count == 0) & (rng.random(weak.shape) < spec.unlabeled_open_fraction)
        weak[drop] = UNLABELED
    return LabelGrid(scene.georef16, weak)


def sample_plots(scene: SynthScene, n: int, area_m2: float = 250.0, seed: int = 0) -> List[PlotRecord]:
    """``n`` disjoint circular plots on land with reference = dominant truth class."""
    if n < 1:
        raise ValueError("need at least one plot")
    ref = scene.truth.georef
    radius = math.sqrt(area_m2 / math.pi)
    if 2 * radius > min(ref.extent_x, ref.extent_y):
        raise PlotPlacementError(f"plot radius {radius:.2f} m does not fit the scene")

    rng = np.random.default_rng([seed, 250])
    centers = np.zeros((0, 2), dtype=np.float64)
    plots: List[PlotRecord] = []
    attempts = 0
    while len(plots) < n:
        attempts += 1
        if attempts > PLACEMENT_ATTEMPTS_PER_PLOT * n:
            raise PlotPlacementError(f"placed only {len(plots)} of {n} disjoint plots")
        x = rng.uniform(ref.origin_x + radius, ref.origin_x + ref.extent_x - radius)
        y = rng.uniform(ref.origin_y - ref.extent_y + radius, ref.origin_y - radius)
        if len(centers) and np.min(np.hypot(centers[:, 0] - x, centers[:, 1] - y)) < 2 * radius:
            continue
        candidate = PlotRecord(center_x=float(x), center_y=float(y), area_m2=area_m2, plot_id=len(plots))
        rows, cols = plot_pixels(ref, candidate)
        if rows.size == 0 or not scene.land_mask.samples[rows, cols].all():
            continue
        reference = dominant_class(scene.truth.samples[rows, cols])
        plots.append(replace(candidate, reference_class=reference))
        centers = np.vstack([centers, [x, y]])
    logger.info("Placed %d plots (%d attempts)", len(plots), attempts)
    return plots
