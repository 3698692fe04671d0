"""Second-round label-noise removal.

After a first full training, large areas where the label and the prediction
consistently disagree about forest vs. background are unlabeled. Species
disagreements are left alone.
"""

import logging
from typing import Dict

import numpy as np
from scipy import ndimage

from raster.grid import BACKGROUND, UNLABELED, LabelGrid
from .prep import ExtentMismatchError, PrepConfig, neighborhood

logger = logging.getLogger(__name__)


def _is_forest(codes: np.ndarray) -> np.ndarray:
    return (codes >= 1) & (codes <= 3)


def conflict_map(labels: np.ndarray, predictions: np.ndarray) -> np.ndarray:
    """True where label says background and prediction forest, or the other way round."""
    return (((labels == BACKGROUND) & _is_forest(predictions))
            | (_is_forest(labels) & (predictions == BACKGROUND)))


def label_stats(labels: LabelGrid) -> Dict[str, float]:
    ref = labels.georef
    labeled = int(np.count_nonzero(labels.samples != UNLABELED))
    return {
        "labeled_pixels": labeled,
        "labeled_area_m2": labeled * ref.pixel_size ** 2,
        "labeled_fraction": labeled / labels.samples.size,
    }


def relabel_round2(labels: LabelGrid, predictions: LabelGrid, cfg: PrepConfig) -> LabelGrid:
    if labels.georef != predictions.georef:
        raise ExtentMismatchError(f"predictions {predictions.georef} do not match labels {labels.georef}")
    if np.any(predictions.samples == UNLABELED):
        raise ValueError("predictions must not contain unlabeled pixels")

    conflict = conflict_map(labels.samples, predictions.samples)
    components, n_components = ndimage.label(conflict, structure=neighborhood(8))
    if n_components == 0:
        return labels

    pixel_area = labels.georef.pixel_size ** 2
    sizes = np.bincount(components.ravel())
    qualifying = sizes * pixel_area >= cfg.relabel_min_area_m2
    qualifying[0] = False
    unlabel = qualifying[components]

    before = label_stats(labels)["labeled_pixels"]
    changed = int(np.count_nonzero(unlabel))
    logger.info("Round-2 relabel: %d of %d conflict components qualify, %d pixels unlabeled (%.3f%% of labeled)",
                int(qualifying.sum()), n_components, changed, 100.0 * changed / max(1, before))
    return labels.with_samples(np.where(unlabel, UNLABELED, labels.samples))
