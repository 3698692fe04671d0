"""Full-map prediction: tiled forward pass, logit blur, crop and mosaic."""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image

from raster.filters import blur_array
from raster.grid import NUM_CLASSES, UNLABELED, FloatGrid, LabelGrid, require_same_georef
from training.dataset import normalize_features
from unet import NetConfig, NetParams, forward
from .tiling import InferConfig, TilePlacement, tile_plan

logger = logging.getLogger(__name__)

THREADS_ENV = "CANOPYSEG_THREADS"

PALETTE = {
    0: (255, 255, 255),
    1: (60, 180, 75),
    2: (245, 130, 48),
    3: (0, 100, 0),
    UNLABELED: (0, 0, 0),
}


def worker_count(requested: Optional[int] = None) -> int:
    """Thread count: explicit request, else ``CANOPYSEG_THREADS``, else CPU count."""
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _padded_length(length: int, divisor: int) -> int:
    return -(-length // divisor) * divisor


def _predict_tile(dtm: np.ndarray, chm: np.ndarray, params: NetParams, net_cfg: NetConfig,
                  cfg: InferConfig, placement: TilePlacement) -> np.ndarray:
    read = placement.read
    x = normalize_features(dtm[read.rows, read.cols], chm[read.rows, read.cols])
    height, width = read.height, read.width
    pad_h = _padded_length(height, net_cfg.divisor) - height
    pad_w = _padded_length(width, net_cfg.divisor) - width
    if pad_h or pad_w:
        x = np.pad(x, ((0, 0), (0, pad_h), (0, pad_w)), mode="reflect")
    logits, _ = forward(params, net_cfg, x[None].astype(params["head.weight"].dtype))
    blurred = blur_array(logits[0, :, :height, :width], cfg.blur_sigma_px)
    rows, cols = placement.local_write()
    return blurred[:, rows, cols].astype(np.float32)


def argmax_species(logits: np.ndarray) -> np.ndarray:
    """Per-pixel class of a (4, H, W) logit stack; ties go to the lowest code."""
    return np.argmax(logits, axis=0).astype(np.uint8)


def predict_map(dtm: FloatGrid, chm: FloatGrid, params: NetParams, net_cfg: NetConfig, cfg: InferConfig,
                threads: Optional[int] = None) -> Tuple[LabelGrid, List[FloatGrid]]:
    """Species map and one blurred logit grid per class."""
    require_same_georef(dtm.georef, chm.georef, "DTM and CHM")
    cfg.check_network(net_cfg)
    valid = dtm.valid_mask()
    dtm_samples = dtm.filled(float(dtm.samples[valid].mean()) if valid.any() else 0.0).samples
    chm_samples = chm.filled(0.0).samples

    placements = tile_plan(dtm.georef.shape, cfg)
    mosaic = np.zeros((NUM_CLASSES,) + dtm.georef.shape, dtype=np.float32)
    workers = worker_count(threads)
    logger.info("Predicting %dx%d map in %d tiles on %d threads", dtm.georef.width, dtm.georef.height,
                len(placements), workers)

    def run(placement: TilePlacement):
        return placement, _predict_tile(dtm_samples, chm_samples, params, net_cfg, cfg, placement)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        for placement, tile in pool.map(run, placements):
            mosaic[:, placement.write.rows, placement.write.cols] = tile
            logger.debug("Tile read %s written", placement.read)

    species = LabelGrid(dtm.georef, argmax_species(mosaic))
    logits = [FloatGrid(dtm.georef, mosaic[c]) for c in range(NUM_CLASSES)]
    return species, logits


def species_from_logits(logits: Sequence[FloatGrid]) -> LabelGrid:
    return LabelGrid(logits[0].georef, argmax_species(np.stack([g.samples for g in logits])))


def write_preview(species: LabelGrid, path: Union[str, Path]) -> None:
    """Colour-mapped PPM of a species map."""
    lut = np.zeros((256, 3), dtype=np.uint8)
    for code, rgb in PALETTE.items():
        lut[code] = rgb
    Image.fromarray(lut[species.samples]).save(path, format="PPM")
    logger.debug("Wrote preview %s", path)
