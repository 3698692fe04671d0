"""Training tiles: feature normalization and region-based sampling.

Regions are ``(col0, row0, width, height)`` pixel rectangles. Validation
tiles tile the validation rectangles; training tiles are drawn anywhere in
the scene that does not touch a validation rectangle.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from raster.grid import UNLABELED, FloatGrid, LabelGrid, require_same_georef

logger = logging.getLogger(__name__)

CHM_SCALE_M = 30.0
DTM_STD_FLOOR_M = 1.0
SAMPLE_ATTEMPTS_PER_TILE = 1000

Region = Tuple[int, int, int, int]


class RegionError(ValueError):
    """A region is outside the scene, smaller than a tile, or leaves no room for training tiles."""


class NoLabeledPixelsError(ValueError):
    """The training area holds no labeled pixel."""


def normalize_features(dtm: np.ndarray, chm: np.ndarray) -> np.ndarray:
    """Stack (DTM, CHM) into a (2, H, W) float32 input.

    DTM is standardized per tile with a 1 m floor on the standard deviation,
    CHM is divided by 30 m.
    """
    dtm = np.asarray(dtm, dtype=np.float64)
    std = max(float(dtm.std()), DTM_STD_FLOOR_M)
    dtm_n = (dtm - dtm.mean()) / std
    chm_n = np.asarray(chm, dtype=np.float64) / CHM_SCALE_M
    return np.stack([dtm_n, chm_n]).astype(np.float32)


@dataclass(frozen=True)
class TrainingData:
    """Raw DTM/CHM samples and labels over one scene."""
    dtm: np.ndarray = field(repr=False)
    chm: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.labels.shape

    def tile(self, row0: int, col0: int, size: int) -> Tuple[np.ndarray, np.ndarray]:
        rows, cols = slice(row0, row0 + size), slice(col0, col0 + size)
        return normalize_features(self.dtm[rows, cols], self.chm[rows, cols]), self.labels[rows, cols]


def training_data(dtm: FloatGrid, chm: FloatGrid, labels: LabelGrid) -> TrainingData:
    require_same_georef(dtm.georef, chm.georef, "DTM and CHM")
    require_same_georef(dtm.georef, labels.georef, "features and labels")
    valid = dtm.valid_mask()
    fill = float(dtm.samples[valid].mean()) if valid.any() else 0.0
    return TrainingData(dtm.filled(fill).samples, chm.filled(0.0).samples, labels.samples)


def _overlaps(row0: int, col0: int, size: int, region: Region) -> bool:
    r_col, r_row, r_w, r_h = region
    return row0 < r_row + r_h and r_row < row0 + size and col0 < r_col + r_w and r_col < col0 + size


def check_regions(shape: Tuple[int, int], regions: Sequence[Region], tile_px: int) -> None:
    height, width = shape
    if tile_px > height or tile_px > width:
        raise RegionError(f"tile {tile_px} px is larger than the {width}x{height} scene")
    for region in regions:
        col0, row0, w, h = region
        if col0 < 0 or row0 < 0 or col0 + w > width or row0 + h > height:
            raise RegionError(f"validation region {region} is outside the {width}x{height} scene")
        if w < tile_px or h < tile_px:
            raise RegionError(f"validation region {region} is smaller than a {tile_px} px tile")


def validation_windows(regions: Sequence[Region], tile_px: int) -> List[Tuple[int, int]]:
    """Top-left (row, col) of non-overlapping tiles laid out inside each region."""
    windows = []
    for col0, row0, w, h in regions:
        for r in range(row0, row0 + h - tile_px + 1, tile_px):
            for c in range(col0, col0 + w - tile_px + 1, tile_px):
                windows.append((r, c))
    return windows


def train_mask(shape: Tuple[int, int], regions: Sequence[Region]) -> np.ndarray:
    mask = np.ones(shape, dtype=bool)
    for col0, row0, w, h in regions:
        mask[row0:row0 + h, col0:col0 + w] = False
    return mask


def require_labeled(data: TrainingData, regions: Sequence[Region]) -> int:
    n = int(np.count_nonzero((data.labels != UNLABELED) & train_mask(data.shape, regions)))
    if n == 0:
        raise NoLabeledPixelsError("no labeled pixels outside the validation regions")
    return n


def sample_train_windows(shape: Tuple[int, int], regions: Sequence[Region], tile_px: int, count: int,
                         rng: np.random.Generator) -> List[Tuple[int, int]]:
    """``count`` random tile positions that do not intersect any validation region."""
    height, width = shape
    windows = []
    attempts = 0
    while len(windows) < count:
        if attempts >= SAMPLE_ATTEMPTS_PER_TILE * count:
            raise RegionError(f"no room for {tile_px} px training tiles outside the validation regions")
        attempts += 1
        row0 = int(rng.integers(0, height - tile_px + 1))
        col0 = int(rng.integers(0, width - tile_px + 1))
        if any(_overlaps(row0, col0, tile_px, region) for region in regions):
            continue
        windows.append((row0, col0))
    return windows
