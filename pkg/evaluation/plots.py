"""Circular inventory plots and their reduction to one dominant class."""

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np

from raster.grid import BACKGROUND, NUM_CLASSES, UNLABELED, GeoRef, LabelGrid

logger = logging.getLogger(__name__)

DEFAULT_PLOT_AREA_M2 = 250.0
PLOTS_CSV_COLUMNS = ["id", "x", "y", "area_m2", "ref_class"]


class PlotOutsideExtentError(ValueError):
    """Plot circle is not fully inside the map."""


class EmptyPlotError(ValueError):
    """No countable (non-unlabeled) pixel inside the plot."""


@dataclass(frozen=True)
class PlotRecord:
    """Ground-truth plot: centre in map metres, area, reference class 0-3."""
    center_x: float
    center_y: float
    area_m2: float = DEFAULT_PLOT_AREA_M2
    reference_class: int = BACKGROUND
    plot_id: int = 0

    def __post_init__(self):
        if not self.area_m2 > 0:
            raise ValueError(f"plot area must be positive, got {self.area_m2}")
        if self.reference_class not in range(NUM_CLASSES):
            raise ValueError(f"plot reference class must be 0-3, got {self.reference_class}")

    @property
    def radius(self) -> float:
        return math.sqrt(self.area_m2 / math.pi)


def plot_pixels(georef: GeoRef, plot: PlotRecord) -> Tuple[np.ndarray, np.ndarray]:
    """(rows, cols) of the pixels whose centres lie strictly inside the plot circle."""
    r = plot.radius
    if (plot.center_x - r < georef.origin_x - 1e-9
            or plot.center_x + r > georef.origin_x + georef.extent_x + 1e-9
            or plot.center_y + r > georef.origin_y + 1e-9
            or plot.center_y - r < georef.origin_y - georef.extent_y - 1e-9):
        raise PlotOutsideExtentError(
            f"plot {plot.plot_id} at ({plot.center_x:.2f}, {plot.center_y:.2f}) r={r:.2f} leaves the map")

    col_c, row_c = georef.to_pixel(plot.center_x, plot.center_y)
    reach = r / georef.pixel_size
    col0, col1 = max(0, int(math.floor(col_c - reach))), min(georef.width, int(math.ceil(col_c + reach)) + 1)
    row0, row1 = max(0, int(math.floor(row_c - reach))), min(georef.height, int(math.ceil(row_c + reach)) + 1)
    rows, cols = np.mgrid[row0:row1, col0:col1]
    dx = (cols + 0.5 - col_c) * georef.pixel_size
    dy = (rows + 0.5 - row_c) * georef.pixel_size
    inside = dx * dx + dy * dy < r * r
    return rows[inside], cols[inside]


def dominant_class(codes: np.ndarray) -> int:
    """Most frequent species among ``codes``; background only when no species is present.

    255 is ignored. Ties go to the lowest class code.
    """
    counts = np.bincount(np.asarray(codes, dtype=np.uint8).ravel(), minlength=256)
    species = counts[1:NUM_CLASSES]
    if species.sum() > 0:
        return 1 + int(np.argmax(species))
    if counts[BACKGROUND] == 0:
        raise EmptyPlotError("no countable pixels")
    return BACKGROUND


def plot_dominant_class(species_map: LabelGrid, plot: PlotRecord) -> int:
    rows, cols = plot_pixels(species_map.georef, plot)
    codes = species_map.samples[rows, cols]
    codes = codes[codes != UNLABELED]
    if codes.size == 0:
        raise EmptyPlotError(f"plot {plot.plot_id} has no countable pixels")
    return dominant_class(codes)


def write_plots_csv(plots: Sequence[PlotRecord], path: Union[str, Path]) -> None:
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(PLOTS_CSV_COLUMNS)
        for plot in plots:
            writer.writerow([plot.plot_id, repr(plot.center_x), repr(plot.center_y),
                             repr(plot.area_m2), plot.reference_class])


def read_plots_csv(path: Union[str, Path]) -> List[PlotRecord]:
    plots = []
    with open(path, 'r', newline='') as f:
        for row in csv.DictReader(f):
            plots.append(PlotRecord(center_x=float(row["x"]), center_y=float(row["y"]),
                                    area_m2=float(row["area_m2"]), reference_class=int(row["ref_class"]),
                                    plot_id=int(row["id"])))
    logger.debug("Read %d plots from %s", len(plots), path)
    return plots
