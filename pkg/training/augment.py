"""Geometric and CowMix augmentation of (features, labels) samples.

A sample is ``(features, labels)`` with features (C, H, W) and labels (H, W).
Dihedral element ``k`` (0..7) is a horizontal flip when ``k >= 4`` followed
by ``k % 4`` clockwise quarter turns. Values are never changed, only moved.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Tuple, Union

import numpy as np

from raster.filters import blur_array
from unet.config import ShapeError

logger = logging.getLogger(__name__)

Sample = Tuple[np.ndarray, np.ndarray]

MIN_MASK_PX = 8


def _dihedral(array: np.ndarray, k: int) -> np.ndarray:
    if k >= 4:
        array = array[..., ::-1]
    return np.ascontiguousarray(np.rot90(array, -(k % 4), axes=(-2, -1)))


def dihedral_augment(sample: Sample, k: int) -> Sample:
    features, labels = sample
    if not 0 <= k < 8:
        raise ValueError(f"dihedral index must be in 0..7, got {k}")
    if labels.shape[0] != labels.shape[1] or features.shape[-2:] != labels.shape:
        raise ShapeError(f"dihedral augmentation needs square, matching tiles, got {features.shape} / {labels.shape}")
    return _dihedral(features, k), _dihedral(labels, k)


def dihedral_inverse(k: int) -> int:
    """Index of the group element that undoes ``k``; reflections are their own inverse."""
    return (4 - k) % 4 if k < 4 else k


@dataclass(frozen=True)
class CowMixConfig:
    sigma_range_px: Tuple[float, float] = (8.0, 32.0)
    keep_fraction_range: Tuple[float, float] = (0.3, 0.7)
    apply_probability: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "sigma_range_px", tuple(float(v) for v in self.sigma_range_px))
        object.__setattr__(self, "keep_fraction_range", tuple(float(v) for v in self.keep_fraction_range))
        lo, hi = self.sigma_range_px
        if not 0 < lo <= hi:
            raise ValueError(f"sigma_range_px must satisfy 0 < lo <= hi, got {self.sigma_range_px}")
        lo, hi = self.keep_fraction_range
        if not 0 < lo <= hi < 1:
            raise ValueError(f"keep_fraction_range must lie in (0, 1), got {self.keep_fraction_range}")
        if not 0 <= self.apply_probability <= 1:
            raise ValueError(f"apply_probability must be in [0, 1], got {self.apply_probability}")

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> "CowMixConfig":
        return cls(**dict(config or {}))


def cow_mask(height: int, width: int, cfg: CowMixConfig,
             seed: Union[int, np.random.Generator] = 0) -> np.ndarray:
    """Boolean mask of smooth blobs covering a random fraction of the tile."""
    if height < MIN_MASK_PX or width < MIN_MASK_PX:
        raise ShapeError(f"cow mask needs at least {MIN_MASK_PX}x{MIN_MASK_PX}, got {height}x{width}")
    rng = np.random.default_rng(seed)
    sigma = rng.uniform(*cfg.sigma_range_px)
    keep = rng.uniform(*cfg.keep_fraction_range)
    field = blur_array(rng.normal(size=(height, width)), sigma)
    mask = field > np.quantile(field, 1.0 - keep)
    logger.debug("Cow mask %dx%d: sigma %.2f, target %.3f, got %.3f", height, width, sigma, keep, mask.mean())
    return mask


def cow_batch_mix(a: Sample, b: Sample, mask: np.ndarray) -> Sample:
    """Take ``a`` where the mask is set and ``b`` elsewhere, for features and labels alike."""
    features_a, labels_a = a
    features_b, labels_b = b
    if features_a.shape != features_b.shape or labels_a.shape != labels_b.shape or mask.shape != labels_a.shape:
        raise ShapeError(f"cannot mix {features_a.shape} with {features_b.shape} under mask {mask.shape}")
    mask = mask.astype(bool)
    return np.where(mask[None], features_a, features_b), np.where(mask, labels_a, labels_b)
