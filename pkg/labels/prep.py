"""Weak-label pre-processing: 16 m forest map -> 1 m training labels.

The steps run in a fixed order:

1. unlabeled 16 m cells become background;
2. 16 m cells on a forest/non-forest border become unlabeled (both sides);
3. nearest-neighbour upsampling, every 16 m cell becomes a 16x16 block;
4. wherever the CHM median (11x11 by default) is below 0.3 m the label is
   background, whatever it was before, unlabeled included.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict

import numpy as np
from scipy import ndimage

from raster.filters import median_array
from raster.grid import BACKGROUND, UNLABELED, FloatGrid, LabelGrid, require_same_georef

logger = logging.getLogger(__name__)


class ExtentMismatchError(ValueError):
    """Label and feature grids do not cover the same area at the expected ratio."""


@dataclass(frozen=True)
class PrepConfig:
    chm_median_window_px: int = 11
    chm_background_threshold_m: float = 0.3
    border_neighborhood: int = 8
    relabel_min_area_m2: float = 25600.0
    upsample_factor: int = 16

    def __post_init__(self):
        if self.chm_median_window_px < 1 or self.chm_median_window_px % 2 == 0:
            raise ValueError(f"chm_median_window_px must be odd, got {self.chm_median_window_px}")
        if not self.chm_background_threshold_m > 0:
            raise ValueError("chm_background_threshold_m must be positive")
        if self.border_neighborhood not in (4, 8):
            raise ValueError(f"border_neighborhood must be 4 or 8, got {self.border_neighborhood}")
        if not self.relabel_min_area_m2 > 0:
            raise ValueError("relabel_min_area_m2 must be positive")
        if self.upsample_factor < 1:
            raise ValueError("upsample_factor must be >= 1")

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> "PrepConfig":
        return cls(**dict(config or {}))


def neighborhood(connectivity: int) -> np.ndarray:
    return ndimage.generate_binary_structure(2, 1 if connectivity == 4 else 2)


def fill_unlabeled(codes: np.ndarray) -> np.ndarray:
    return np.where(codes == UNLABELED, BACKGROUND, codes).astype(np.uint8)


def unlabel_borders(codes: np.ndarray, connectivity: int = 8) -> np.ndarray:
    """Unlabel every pixel whose neighbourhood mixes forest (1-3) and background."""
    forest = ((codes >= 1) & (codes <= 3)).astype(np.uint8)
    footprint = neighborhood(connectivity)
    # "nearest" replicates in-grid neighbours, so the grid edge itself is never a border.
    low = ndimage.minimum_filter(forest, footprint=footprint, mode="nearest")
    high = ndimage.maximum_filter(forest, footprint=footprint, mode="nearest")
    return np.where(low != high, UNLABELED, codes).astype(np.uint8)


def upsample_nearest(codes: np.ndarray, factor: int) -> np.ndarray:
    return np.repeat(np.repeat(codes, factor, axis=0), factor, axis=1)


def _check_ratio(weak16: LabelGrid, chm: FloatGrid, factor: int) -> None:
    coarse, fine = weak16.georef, chm.georef
    if (coarse.width * factor != fine.width or coarse.height * factor != fine.height
            or abs(coarse.pixel_size - factor * fine.pixel_size) > 1e-9 * coarse.pixel_size
            or not coarse.same_footprint(fine)):
        raise ExtentMismatchError(
            f"weak labels {coarse.width}x{coarse.height}@{coarse.pixel_size} m do not cover "
            f"features {fine.width}x{fine.height}@{fine.pixel_size} m at ratio {factor}")


def prep_labels(weak16: LabelGrid, chm: FloatGrid, cfg: PrepConfig) -> LabelGrid:
    _check_ratio(weak16, chm, cfg.upsample_factor)
    codes = fill_unlabeled(weak16.samples)
    codes = unlabel_borders(codes, cfg.border_neighborhood)
    codes = upsample_nearest(codes, cfg.upsample_factor)

    median = median_array(chm.filled(0.0).samples, cfg.chm_median_window_px)
    low_canopy = median < np.float32(cfg.chm_background_threshold_m)
    codes = np.where(low_canopy, BACKGROUND, codes).astype(np.uint8)

    labeled = np.count_nonzero(codes != UNLABELED)
    logger.info("Prepared %dx%d labels: %.1f%% labeled, %.1f%% overridden by low canopy",
                codes.shape[1], codes.shape[0], 100.0 * labeled / codes.size, 100.0 * low_canopy.mean())
    return LabelGrid(chm.georef, codes)


def apply_land_mask(labels: LabelGrid, mask: LabelGrid) -> LabelGrid:
    """Unlabel everything outside land (mask 0)."""
    if labels.georef != mask.georef:
        raise ExtentMismatchError(f"land mask geometry {mask.georef} differs from labels {labels.georef}")
    return labels.with_samples(np.where(mask.samples == 0, UNLABELED, labels.samples))


def weak_species_map(weak16: LabelGrid, factor: int = 16) -> LabelGrid:
    """The weak map as a 1 m species map: no label means background, cells become blocks.

    Scored on the plots like a prediction, it is the baseline the lidar model
    is compared against.
    """
    codes = upsample_nearest(fill_unlabeled(weak16.samples), factor)
    return LabelGrid(weak16.georef.scaled(factor), codes)
