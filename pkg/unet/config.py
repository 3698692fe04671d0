"""U-Net architecture settings."""

from dataclasses import asdict, dataclass, fields
from typing import Any, Dict

import numpy as np

# Tensors are (batch, channels, height, width) ndarrays, float32 or float64.
Tensor4 = np.ndarray

NORMALIZATIONS = ("instance", "none")


class ShapeError(ValueError):
    """Tensor dimensions do not fit the network or the operation."""


@dataclass(frozen=True)
class NetConfig:
    in_channels: int = 2
    out_channels: int = 4
    depth: int = 5
    base_filters: int = 16
    upsampling: str = "transposed-convolution"
    padding: str = "reflection"
    normalization: str = "instance"
    norm_epsilon: float = 1e-5

    def __post_init__(self):
        if self.depth < 2:
            raise ValueError(f"depth must be >= 2, got {self.depth}")
        if self.base_filters < 1:
            raise ValueError(f"base_filters must be >= 1, got {self.base_filters}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("in_channels and out_channels must be >= 1")
        if self.upsampling != "transposed-convolution":
            raise ValueError(f"unsupported upsampling {self.upsampling!r}")
        if self.padding != "reflection":
            raise ValueError(f"unsupported padding {self.padding!r}")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"normalization must be one of {NORMALIZATIONS}, got {self.normalization!r}")
        if not self.norm_epsilon > 0:
            raise ValueError("norm_epsilon must be positive")

    @property
    def divisor(self) -> int:
        """Input height and width must be multiples of this."""
        return 2 ** (self.depth - 1)

    def channels(self, level: int) -> int:
        return self.base_filters * 2 ** level

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> "NetConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(config or {}) - known
        if unknown:
            raise ValueError(f"unknown net config keys: {sorted(unknown)}")
        return cls(**dict(config or {}))
