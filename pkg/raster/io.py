"""Raster file I/O: the binary ``CSR1`` container and ESRI ASCII grids.

CSR1 layout (little-endian)::

    magic     4s   b"CSR1"
    kind      u8   0 = float, 1 = label
    width     u32
    height    u32
    origin_x  f64
    origin_y  f64
    pixel     f64
    nodata    f32  float kind only; NaN means "no sentinel"
    payload        width*height f32 (float) or u8 (label), row-major
"""

import logging
import math
import struct
from pathlib import Path
from typing import Union

import numpy as np

from .grid import FloatGrid, GeoRef, Grid, IllegalLabelCodeError, LabelGrid  # noqa: F401

logger = logging.getLogger(__name__)

MAGIC = b"CSR1"
KIND_FLOAT = 0
KIND_LABEL = 1

_HEADER = struct.Struct("<4sBIIddd")
_NODATA = struct.Struct("<f")


class RasterFormatError(ValueError):
    """File does not hold a well-formed raster."""


class BadMagicError(RasterFormatError):
    pass


class TruncatedPayloadError(RasterFormatError):
    pass


class DimensionMismatchError(RasterFormatError):
    pass


class IllegalLabelPayloadError(RasterFormatError, IllegalLabelCodeError):
    """A label file holds a code outside {0, 1, 2, 3, 255}."""


def _label_grid(georef: GeoRef, samples: np.ndarray) -> LabelGrid:
    try:
        return LabelGrid(georef, samples)
    except IllegalLabelCodeError as e:
        raise IllegalLabelPayloadError(str(e)) from e


def encode_raster(grid: Grid) -> bytes:
    ref = grid.georef
    kind = KIND_FLOAT if isinstance(grid, FloatGrid) else KIND_LABEL
    parts = [_HEADER.pack(MAGIC, kind, ref.width, ref.height, ref.origin_x, ref.origin_y, ref.pixel_size)]
    if kind == KIND_FLOAT:
        nodata = float("nan") if grid.nodata is None else grid.nodata
        parts.append(_NODATA.pack(nodata))
        parts.append(grid.samples.astype("<f4").tobytes())
    else:
        parts.append(grid.samples.astype(np.uint8).tobytes())
    return b"".join(parts)


def decode_raster(data: bytes) -> Grid:
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    if len(data) < _HEADER.size:
        raise TruncatedPayloadError(f"header needs {_HEADER.size} bytes, file has {len(data)}")
    _, kind, width, height, origin_x, origin_y, pixel_size = _HEADER.unpack_from(data, 0)
    if kind not in (KIND_FLOAT, KIND_LABEL):
        raise DimensionMismatchError(f"unknown raster kind byte {kind}")
    if width == 0 or height == 0:
        raise DimensionMismatchError(f"header declares empty grid {width}x{height}")

    offset = _HEADER.size
    nodata = None
    if kind == KIND_FLOAT:
        if len(data) < offset + _NODATA.size:
            raise TruncatedPayloadError("float raster header is missing its nodata field")
        (nodata,) = _NODATA.unpack_from(data, offset)
        offset += _NODATA.size
        if math.isnan(nodata):
            nodata = None

    item = 4 if kind == KIND_FLOAT else 1
    expected = width * height * item
    payload = len(data) - offset
    if payload < expected:
        raise TruncatedPayloadError(
            f"header declares {width}x{height} samples ({expected} bytes), payload holds {payload}")
    if payload > expected:
        raise DimensionMismatchError(
            f"header declares {width}x{height} samples ({expected} bytes), payload holds {payload}")

    georef = GeoRef(origin_x, origin_y, pixel_size, width, height)
    if kind == KIND_FLOAT:
        samples = np.frombuffer(data, dtype="<f4", count=width * height, offset=offset)
        return FloatGrid(georef, samples.reshape(height, width), nodata)
    samples = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=offset)
    return _label_grid(georef, samples.reshape(height, width))


def save_raster(grid: Grid, path: Union[str, Path]) -> None:
    """Write ``grid`` as a CSR1 file."""
    Path(path).write_bytes(encode_raster(grid))
    logger.debug("Wrote %s raster %dx%d to %s", type(grid).__name__,
                 grid.georef.width, grid.georef.height, path)


def load_raster(path: Union[str, Path]) -> Grid:
    """Read a CSR1 file; the kind byte decides FloatGrid vs LabelGrid."""
    return decode_raster(Path(path).read_bytes())


def save_ascii_grid(grid: Grid, path: Union[str, Path]) -> None:
    """Export as an ESRI ASCII grid (lower-left corner convention)."""
    ref = grid.georef
    if isinstance(grid, FloatGrid):
        nodata = -9999.0 if grid.nodata is None else grid.nodata
        fmt = "%.9g"
    else:
        nodata = 255
        fmt = "%d"
    header = (f"ncols {ref.width}\nnrows {ref.height}\n"
              f"xllcorner {ref.origin_x!r}\nyllcorner {ref.origin_y - ref.extent_y!r}\n"
              f"cellsize {ref.pixel_size!r}\nNODATA_value {nodata}")
    np.savetxt(path, grid.samples, fmt=fmt, header=header, comments="")


def load_ascii_grid(path: Union[str, Path], kind: str = "float") -> Grid:
    """Import an ESRI ASCII grid as a FloatGrid (``kind="float"``) or LabelGrid."""
    header = {}
    header_lines = 0
    with open(path, "r") as f:
        for line in f:
            tokens = line.split()
            if len(tokens) != 2 or tokens[0][0].isdigit() or tokens[0][0] in "+-.":
                break
            header[tokens[0].lower()] = tokens[1]
            header_lines += 1
    for key in ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize"):
        if key not in header:
            raise RasterFormatError(f"ASCII grid header is missing {key}")

    width, height = int(header["ncols"]), int(header["nrows"])
    cell = float(header["cellsize"])
    values = np.loadtxt(path, skiprows=header_lines, ndmin=2)
    if values.size != width * height:
        raise DimensionMismatchError(f"ASCII grid declares {width}x{height}, holds {values.size} values")
    georef = GeoRef(float(header["xllcorner"]), float(header["yllcorner"]) + height * cell, cell, width, height)
    values = values.reshape(height, width)
    if kind == "label":
        return _label_grid(georef, values.astype(np.int64))
    nodata = float(header["nodata_value"]) if "nodata_value" in header else None
    return FloatGrid(georef, values, nodata)
