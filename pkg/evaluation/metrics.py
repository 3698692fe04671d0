"""Plot-level confusion matrix and its derived scores.

Orientation follows the published result table: rows are predictions,
columns are the plot reference.
"""

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from raster.grid import NUM_CLASSES, LabelGrid
from .plots import PlotRecord, plot_dominant_class

logger = logging.getLogger(__name__)


class PlotEvaluationError(ValueError):
    """A single plot could not be evaluated; carries its position in the input."""

    def __init__(self, index: int, plot: PlotRecord, cause: Exception):
        super().__init__(f"plot #{index} (id {plot.plot_id}): {cause}")
        self.index = index
        self.plot = plot
        self.cause = cause


def _ratio(numerator: np.ndarray, denominator: np.ndarray) -> np.ndarray:
    out = np.zeros(numerator.shape, dtype=np.float64)
    np.divide(numerator, denominator, out=out, where=denominator > 0)
    return out


@dataclass
class ConfusionMatrix:
    counts: np.ndarray = field(default_factory=lambda: np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64))

    def __post_init__(self):
        self.counts = np.array(self.counts, dtype=np.int64)
        if self.counts.shape != (NUM_CLASSES, NUM_CLASSES):
            raise ValueError(f"confusion matrix must be {NUM_CLASSES}x{NUM_CLASSES}, got {self.counts.shape}")
        if (self.counts < 0).any():
            raise ValueError("confusion counts must be non-negative")

    def add(self, predicted: int, reference: int) -> None:
        self.counts[predicted, reference] += 1

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def col_sums(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def precision(self) -> np.ndarray:
        return _ratio(np.diag(self.counts).astype(np.float64), self.row_sums)

    @property
    def recall(self) -> np.ndarray:
        return _ratio(np.diag(self.counts).astype(np.float64), self.col_sums)

    @property
    def f1(self) -> np.ndarray:
        p, r = self.precision, self.recall
        return _ratio(2.0 * p * r, p + r)

    @property
    def overall_accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total if self.total else 0.0

    @property
    def macro_f1(self) -> float:
        return float(self.f1.mean())


def evaluate_plots(species_map: LabelGrid, plots: Sequence[PlotRecord]) -> ConfusionMatrix:
    """Reduce every plot of the map to its dominant class and tally against the reference."""
    if not plots:
        raise ValueError("evaluation needs at least one plot")
    cm = ConfusionMatrix()
    for index, plot in enumerate(plots):
        try:
            predicted = plot_dominant_class(species_map, plot)
        except ValueError as e:
            raise PlotEvaluationError(index, plot, e) from e
        cm.add(predicted, plot.reference_class)
    logger.info("Evaluated %d plots: OA %.3f, macro-F1 %.3f", cm.total, cm.overall_accuracy, cm.macro_f1)
    return cm
