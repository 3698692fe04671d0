"""Raster kernels: canopy height, Gaussian blur and median filter.

Both filters use reflection at the borders (``d c b | a b c d``, the edge
sample is not repeated), which is scipy's ``mirror`` mode and numpy's
``reflect`` pad mode. Output geometry always equals input geometry.
"""

import logging
import math

import numpy as np
from scipy import ndimage

from .grid import FloatGrid, require_same_georef

logger = logging.getLogger(__name__)

BORDER_MODE = "mirror"
DEFAULT_NODATA = -9999.0


class EvenWindowError(ValueError):
    """Median window must be an odd pixel count."""


def compute_chm(dsm: FloatGrid, dtm: FloatGrid) -> FloatGrid:
    """Canopy height model: DSM - DTM, negatives clamped to 0.

    A pixel that is nodata in either input is nodata in the output.
    """
    require_same_georef(dsm.georef, dtm.georef, "DSM and DTM")
    chm = np.maximum(dsm.samples.astype(np.float64) - dtm.samples.astype(np.float64), 0.0)
    valid = dsm.valid_mask() & dtm.valid_mask()
    if valid.all():
        return FloatGrid(dsm.georef, chm.astype(np.float32))

    # Heights are >= 0, so only a negative sentinel can be told apart from them.
    nodata = next((v for v in (dsm.nodata, dtm.nodata) if v is not None and v < 0), DEFAULT_NODATA)
    chm = np.where(valid, chm, nodata)
    logger.debug("CHM: %d nodata pixels propagated", int((~valid).sum()))
    return FloatGrid(dsm.georef, chm.astype(np.float32), nodata)


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian weights over radius ceil(3 sigma)."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    radius = int(math.ceil(3.0 * sigma))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    weights = np.exp(-0.5 * (offsets / sigma) ** 2)
    return weights / weights.sum()


def blur_array(array: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur over the last two axes, computed in float64."""
    kernel = gaussian_kernel(sigma)
    out = ndimage.correlate1d(np.asarray(array, dtype=np.float64), kernel, axis=-1, mode=BORDER_MODE)
    return ndimage.correlate1d(out, kernel, axis=-2, mode=BORDER_MODE)


def gaussian_blur(grid: FloatGrid, sigma: float) -> FloatGrid:
    return grid.with_samples(blur_array(grid.samples, sigma).astype(np.float32))


def median_array(array: np.ndarray, window: int) -> np.ndarray:
    """Exact window x window median (the middle element of the sorted window)."""
    if window < 1 or window % 2 == 0:
        raise EvenWindowError(f"median window must be odd and >= 1, got {window}")
    if window == 1:
        return np.array(array, copy=True)
    return ndimage.median_filter(array, size=window, mode=BORDER_MODE)


def median_filter(grid: FloatGrid, window: int) -> FloatGrid:
    return grid.with_samples(median_array(grid.samples, window))
