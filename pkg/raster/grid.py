"""Georeferenced raster containers.

A grid is a row-major 2-D numpy array plus a ``GeoRef`` that places its
top-left corner in map coordinates. Grids are immutable: the sample arrays are
copied on construction and marked read-only, so every operation returns a new
grid and shared inputs can be read from several threads at once.
"""

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np

BACKGROUND = 0
BIRCH = 1
SCOTS_PINE = 2
NORWAY_SPRUCE = 3
UNLABELED = 255

NUM_CLASSES = 4
VALID_LABEL_CODES = (BACKGROUND, BIRCH, SCOTS_PINE, NORWAY_SPRUCE, UNLABELED)
CLASS_NAMES = ("Background", "Birch", "Scots pine", "Norway spruce")


class GeoRefMismatchError(ValueError):
    """Two grids that must share geometry do not."""


class CropBoundsError(ValueError):
    """Crop rectangle reaches outside the grid."""


class IllegalLabelCodeError(ValueError):
    """A label grid holds a code outside {0, 1, 2, 3, 255}."""


@dataclass(frozen=True)
class GeoRef:
    """Placement of a grid: top-left corner, square pixel size, pixel counts."""
    origin_x: float
    origin_y: float
    pixel_size: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.pixel_size > 0 and math.isfinite(self.pixel_size)):
            raise ValueError(f"pixel_size must be positive, got {self.pixel_size}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.width}x{self.height}")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.height, self.width

    @property
    def extent_x(self) -> float:
        return self.width * self.pixel_size

    @property
    def extent_y(self) -> float:
        return self.height * self.pixel_size

    def pixel_center(self, col: float, row: float) -> Tuple[float, float]:
        """Map coordinates of the centre of pixel (col, row)."""
        return (self.origin_x + (col + 0.5) * self.pixel_size,
                self.origin_y - (row + 0.5) * self.pixel_size)

    def to_pixel(self, x: float, y: float) -> Tuple[float, float]:
        """Continuous (col, row) position of a map point; pixel centres land on .5."""
        return (x - self.origin_x) / self.pixel_size, (self.origin_y - y) / self.pixel_size

    def shifted(self, col0: int, row0: int, width: int, height: int) -> "GeoRef":
        return GeoRef(self.origin_x + col0 * self.pixel_size,
                      self.origin_y - row0 * self.pixel_size,
                      self.pixel_size, width, height)

    def scaled(self, factor: int) -> "GeoRef":
        """Same footprint with pixels ``factor`` times smaller."""
        return GeoRef(self.origin_x, self.origin_y, self.pixel_size / factor,
                      self.width * factor, self.height * factor)

    def same_footprint(self, other: "GeoRef") -> bool:
        return (math.isclose(self.origin_x, other.origin_x, abs_tol=1e-6)
                and math.isclose(self.origin_y, other.origin_y, abs_tol=1e-6)
                and math.isclose(self.extent_x, other.extent_x, abs_tol=1e-6)
                and math.isclose(self.extent_y, other.extent_y, abs_tol=1e-6))


def _frozen_array(samples, dtype, georef: GeoRef) -> np.ndarray:
    array = np.array(samples, dtype=dtype, copy=True)
    if array.ndim == 1 and array.size == georef.width * georef.height:
        array = array.reshape(georef.shape)
    if array.shape != georef.shape:
        raise ValueError(f"samples shape {array.shape} does not match georef {georef.shape}")
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class FloatGrid:
    """32-bit float samples (DTM, DSM, CHM, logits)."""
    georef: GeoRef
    samples: np.ndarray = field(repr=False)
    nodata: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "samples", _frozen_array(self.samples, np.float32, self.georef))
        if self.nodata is not None:
            nodata = float(np.float32(self.nodata))
            object.__setattr__(self, "nodata", None if math.isnan(nodata) else nodata)
        valid = self.samples if self.nodata is None else self.samples[self.valid_mask()]
        if not np.all(np.isfinite(valid)):
            raise ValueError("float grid holds non-finite samples outside nodata")

    def valid_mask(self) -> np.ndarray:
        if self.nodata is None:
            return np.ones(self.georef.shape, dtype=bool)
        return self.samples != np.float32(self.nodata)

    def filled(self, value: float) -> "FloatGrid":
        """Copy with nodata samples replaced by ``value`` and no sentinel."""
        if self.nodata is None:
            return self
        return FloatGrid(self.georef, np.where(self.valid_mask(), self.samples, np.float32(value)))

    def with_samples(self, samples: np.ndarray) -> "FloatGrid":
        return FloatGrid(self.georef, samples, self.nodata)


@dataclass(frozen=True)
class LabelGrid:
    """8-bit class codes in {0 background, 1 birch, 2 pine, 3 spruce, 255 unlabeled}."""
    georef: GeoRef
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        raw = np.asarray(self.samples)
        illegal = ~np.isin(raw, VALID_LABEL_CODES)
        if illegal.any():
            bad = sorted(set(int(c) for c in np.unique(raw[illegal])))
            raise IllegalLabelCodeError(f"illegal label codes {bad[:10]}")
        object.__setattr__(self, "samples", _frozen_array(raw, np.uint8, self.georef))

    def with_samples(self, samples: np.ndarray) -> "LabelGrid":
        return LabelGrid(self.georef, samples)

    def class_counts(self) -> np.ndarray:
        """Pixel count per class 0..3 (255 excluded)."""
        return np.bincount(self.samples.ravel(), minlength=256)[:NUM_CLASSES].astype(np.int64)


Grid = Union[FloatGrid, LabelGrid]


def require_same_georef(a: GeoRef, b: GeoRef, what: str = "grids") -> None:
    if a != b:
        raise GeoRefMismatchError(f"{what} differ in geometry: {a} vs {b}")


def crop(grid: Grid, col0: int, row0: int, width: int, height: int) -> Grid:
    """Sub-grid of ``width`` x ``height`` pixels starting at (col0, row0)."""
    ref = grid.georef
    if (col0 < 0 or row0 < 0 or width < 1 or height < 1
            or col0 + width > ref.width or row0 + height > ref.height):
        raise CropBoundsError(
            f"crop ({col0}, {row0}, {width}, {height}) outside {ref.width}x{ref.height} grid")
    samples = grid.samples[row0:row0 + height, col0:col0 + width]
    new_ref = ref.shifted(col0, row0, width, height)
    if isinstance(grid, FloatGrid):
        return FloatGrid(new_ref, samples, grid.nodata)
    return LabelGrid(new_ref, samples)
