"""Overlapping tile layout for full-map prediction.

Read windows are ``tile_px`` wide and advance by ``tile_px - 2 * crop_px``;
the last one is pulled back to end on the map edge. Each write window is its
read window minus ``crop_px`` on every interior side, trimmed so that
consecutive write windows abut. Map edges are written up to the edge.
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Tuple

from unet import NetConfig


class TileConfigError(ValueError):
    """Tile and crop sizes are inconsistent with each other or with the network."""


@dataclass(frozen=True)
class InferConfig:
    tile_px: int = 128
    crop_px: int = 32
    blur_sigma_px: float = 1.0

    def __post_init__(self):
        if self.crop_px < 0:
            raise TileConfigError(f"crop_px must be >= 0, got {self.crop_px}")
        if self.tile_px - 2 * self.crop_px <= 0:
            raise TileConfigError(f"tile_px {self.tile_px} leaves nothing after cropping {self.crop_px} px per side")
        if not self.blur_sigma_px > 0:
            raise TileConfigError(f"blur_sigma_px must be positive, got {self.blur_sigma_px}")

    @property
    def stride(self) -> int:
        return self.tile_px - 2 * self.crop_px

    def check_network(self, net_cfg: NetConfig) -> None:
        if self.tile_px % net_cfg.divisor:
            raise TileConfigError(f"tile_px {self.tile_px} is not divisible by {net_cfg.divisor}")

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> "InferConfig":
        return cls(**dict(config or {}))


@dataclass(frozen=True)
class Window:
    row0: int
    col0: int
    height: int
    width: int

    @property
    def rows(self) -> slice:
        return slice(self.row0, self.row0 + self.height)

    @property
    def cols(self) -> slice:
        return slice(self.col0, self.col0 + self.width)


@dataclass(frozen=True)
class TilePlacement:
    read: Window
    write: Window

    def local_write(self) -> Tuple[slice, slice]:
        """Write window in tile coordinates."""
        r = self.write.row0 - self.read.row0
        c = self.write.col0 - self.read.col0
        return slice(r, r + self.write.height), slice(c, c + self.write.width)


def axis_plan(extent: int, tile_px: int, crop_px: int) -> List[Tuple[int, int, int, int]]:
    """(read_start, read_length, write_start, write_end) along one axis."""
    if extent <= tile_px:
        return [(0, extent, 0, extent)]
    stride = tile_px - 2 * crop_px
    positions = [0]
    while positions[-1] + tile_px < extent:
        positions.append(min(positions[-1] + stride, extent - tile_px))
    plan = []
    write_start = 0
    for i, pos in enumerate(positions):
        write_end = extent if i == len(positions) - 1 else pos + tile_px - crop_px
        plan.append((pos, tile_px, write_start, write_end))
        write_start = write_end
    return plan


def tile_plan(extent_px: Tuple[int, int], cfg: InferConfig) -> List[TilePlacement]:
    """Placements for a (height, width) map, row-major."""
    height, width = extent_px
    if height < 1 or width < 1:
        raise TileConfigError(f"cannot tile an empty {height}x{width} map")
    placements = []
    for r0, rh, wr0, wr1 in axis_plan(height, cfg.tile_px, cfg.crop_px):
        for c0, cw, wc0, wc1 in axis_plan(width, cfg.tile_px, cfg.crop_px):
            placements.append(TilePlacement(Window(r0, c0, rh, cw), Window(wr0, wc0, wr1 - wr0, wc1 - wc0)))
    return placements
