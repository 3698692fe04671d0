"""U-Net forward and backward passes over named numpy tensors.

Encoder level ``l`` runs two [conv3x3 -> instance norm -> ReLU] blocks with
``base_filters * 2**l`` channels and, except at the bottom, a 2x2 max pool.
Decoder level ``l`` upsamples with a 2x2 stride-2 transposed convolution,
concatenates ``[skip, upsampled]`` and runs the same two blocks. A 1x1
convolution maps the top decoder output to class logits.
"""

import hashlib
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple, Union

import numpy as np

from . import layers
from .config import NetConfig, ShapeError, Tensor4

logger = logging.getLogger(__name__)


class TapeMismatchError(ValueError):
    """Backward was called with a tape that does not belong to these parameters."""


@dataclass
class NetParams:
    """Ordered named tensors of one network (also used for gradients)."""
    config: NetConfig
    tensors: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)

    def __post_init__(self):
        self.tensors = OrderedDict(self.tensors)
        for name, value in self.tensors.items():
            if not np.all(np.isfinite(value)):
                raise ValueError(f"parameter {name} holds non-finite values")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def names(self) -> Tuple[str, ...]:
        return tuple(self.tensors)

    def astype(self, dtype) -> "NetParams":
        return NetParams(self.config, OrderedDict((k, v.astype(dtype)) for k, v in self.tensors.items()))

    def copy(self) -> "NetParams":
        return NetParams(self.config, OrderedDict((k, v.copy()) for k, v in self.tensors.items()))

    def checksum(self) -> str:
        """sha256 over names, shapes and float64 bytes in parameter order."""
        digest = hashlib.sha256()
        for name, value in self.tensors.items():
            digest.update(name.encode("utf-8"))
            digest.update(str(value.shape).encode("ascii"))
            digest.update(np.ascontiguousarray(value, dtype="<f8").tobytes())
        return digest.hexdigest()


@dataclass
class Tape:
    """Activations retained by ``forward`` for ``backward``."""
    config: NetConfig
    names: Tuple[str, ...]
    input_shape: Tuple[int, ...]
    output_shape: Tuple[int, ...]
    caches: Dict[str, object]


def _block_shapes(cfg: NetConfig, prefix: str, in_ch: int, out_ch: int) -> "OrderedDict[str, tuple]":
    shapes = OrderedDict()
    for i, channels_in in ((1, in_ch), (2, out_ch)):
        shapes[f"{prefix}.conv{i}.weight"] = (out_ch, channels_in, 3, 3)
        shapes[f"{prefix}.conv{i}.bias"] = (out_ch,)
        if cfg.normalization == "instance":
            shapes[f"{prefix}.norm{i}.scale"] = (out_ch,)
            shapes[f"{prefix}.norm{i}.shift"] = (out_ch,)
    return shapes


def param_shapes(cfg: NetConfig) -> "OrderedDict[str, tuple]":
    """Name -> shape for every tensor, in canonical order."""
    shapes = OrderedDict()
    in_ch = cfg.in_channels
    for level in range(cfg.depth):
        shapes.update(_block_shapes(cfg, f"enc{level}", in_ch, cfg.channels(level)))
        in_ch = cfg.channels(level)
    for level in reversed(range(cfg.depth - 1)):
        channels = cfg.channels(level)
        shapes[f"dec{level}.up.weight"] = (cfg.channels(level + 1), channels, 2, 2)
        shapes[f"dec{level}.up.bias"] = (channels,)
        shapes.update(_block_shapes(cfg, f"dec{level}", 2 * channels, channels))
    shapes["head.weight"] = (cfg.out_channels, cfg.base_filters, 1, 1)
    shapes["head.bias"] = (cfg.out_channels,)
    return shapes


def _fan_in(name: str, shape: tuple) -> int:
    if ".up." in name:
        return shape[0]
    return int(np.prod(shape[1:]))


def init_model(cfg: NetConfig, seed: Union[int, np.random.Generator] = 0) -> NetParams:
    """He-uniform weights, zero biases, unit norm scales and zero norm shifts."""
    rng = np.random.default_rng(seed)
    tensors = OrderedDict()
    for name, shape in param_shapes(cfg).items():
        if name.endswith(".weight"):
            bound = np.sqrt(6.0 / _fan_in(name, shape))
            tensors[name] = rng.uniform(-bound, bound, size=shape).astype(np.float32)
        elif name.endswith(".scale"):
            tensors[name] = np.ones(shape, dtype=np.float32)
        else:
            tensors[name] = np.zeros(shape, dtype=np.float32)
    params = NetParams(cfg, tensors)
    logger.debug("Initialized U-Net depth %d, base %d: %d parameters",
                 cfg.depth, cfg.base_filters, parameter_count(params))
    return params


def parameter_count(params: NetParams) -> int:
    return int(sum(v.size for v in params.tensors.values()))


def receptive_radius(cfg: NetConfig) -> int:
    """Pixels on each side of an output pixel that can influence it.

    Convolutions at level ``l`` add ``2**l`` each, an upsampling step into
    level ``l`` adds ``2**l``; pooling adds nothing beyond its own block.
    """
    radius = sum(2 * 2 ** level for level in range(cfg.depth))
    for level in reversed(range(cfg.depth - 1)):
        radius += 2 ** level + 2 * 2 ** level
    return radius


def check_input(cfg: NetConfig, x: np.ndarray) -> None:
    if x.ndim != 4:
        raise ShapeError(f"expected (batch, channels, height, width), got shape {x.shape}")
    if x.shape[1] != cfg.in_channels:
        raise ShapeError(f"expected {cfg.in_channels} input channels, got {x.shape[1]}")
    height, width = x.shape[2], x.shape[3]
    if height % cfg.divisor or width % cfg.divisor:
        raise ShapeError(f"input {height}x{width} is not divisible by {cfg.divisor}")


def _block_forward(params: NetParams, cfg: NetConfig, prefix: str, x: np.ndarray, caches: dict) -> np.ndarray:
    h = x
    for i in (1, 2):
        name = f"{prefix}.conv{i}"
        h, caches[name] = layers.conv3x3_forward(h, params[f"{name}.weight"], params[f"{name}.bias"])
        if cfg.normalization == "instance":
            name = f"{prefix}.norm{i}"
            h, caches[name] = layers.instance_norm_forward(
                h, params[f"{name}.scale"], params[f"{name}.shift"], cfg.norm_epsilon)
        h, caches[f"{prefix}.relu{i}"] = layers.relu_forward(h)
    return h


def _block_backward(cfg: NetConfig, prefix: str, dout: np.ndarray, caches: dict, grads: dict) -> np.ndarray:
    d = dout
    for i in (2, 1):
        d = layers.relu_backward(d, caches[f"{prefix}.relu{i}"])
        if cfg.normalization == "instance":
            name = f"{prefix}.norm{i}"
            d, grads[f"{name}.scale"], grads[f"{name}.shift"] = layers.instance_norm_backward(d, caches[name])
        name = f"{prefix}.conv{i}"
        d, grads[f"{name}.weight"], grads[f"{name}.bias"] = layers.conv3x3_backward(d, caches[name])
    return d


def forward(params: NetParams, cfg: NetConfig, x: Tensor4) -> Tuple[Tensor4, Tape]:
    check_input(cfg, x)
    caches: Dict[str, object] = {}
    skips = []
    h = x
    for level in range(cfg.depth):
        h = _block_forward(params, cfg, f"enc{level}", h, caches)
        if level < cfg.depth - 1:
            skips.append(h)
            h, caches[f"pool{level}"] = layers.maxpool_forward(h)
    for level in reversed(range(cfg.depth - 1)):
        name = f"dec{level}.up"
        up, caches[name] = layers.upconv_forward(h, params[f"{name}.weight"], params[f"{name}.bias"])
        h = np.concatenate([skips[level], up], axis=1)
        h = _block_forward(params, cfg, f"dec{level}", h, caches)
    logits, caches["head"] = layers.conv1x1_forward(h, params["head.weight"], params["head.bias"])
    tape = Tape(cfg, params.names(), tuple(x.shape), tuple(logits.shape), caches)
    return logits, tape


def backward(params: NetParams, cfg: NetConfig, tape: Tape, dlogits: Tensor4) -> NetParams:
    """Gradients of ``sum(logits * dlogits)`` for every parameter."""
    if tape.config != cfg or tape.names != params.names():
        raise TapeMismatchError("tape was recorded with a different network")
    if tuple(dlogits.shape) != tape.output_shape:
        raise TapeMismatchError(f"dlogits shape {dlogits.shape} does not match logits {tape.output_shape}")

    caches = tape.caches
    grads: Dict[str, np.ndarray] = {}
    d, grads["head.weight"], grads["head.bias"] = layers.conv1x1_backward(dlogits, caches["head"])

    skip_grads = {}
    for level in range(cfg.depth - 1):
        d = _block_backward(cfg, f"dec{level}", d, caches, grads)
        channels = cfg.channels(level)
        skip_grads[level] = d[:, :channels]
        name = f"dec{level}.up"
        d, grads[f"{name}.weight"], grads[f"{name}.bias"] = layers.upconv_backward(d[:, channels:], caches[name])

    for level in reversed(range(cfg.depth)):
        if level < cfg.depth - 1:
            d = layers.maxpool_backward(d, caches[f"pool{level}"]) + skip_grads[level]
        d = _block_backward(cfg, f"enc{level}", d, caches, grads)

    return NetParams(cfg, OrderedDict((name, grads[name]) for name in params.names()))


def predict_logits(params: NetParams, cfg: NetConfig, x: Tensor4, dtype: Optional[type] = None) -> Tensor4:
    """Forward pass without keeping the tape."""
    if dtype is not None:
        x = x.astype(dtype)
    logits, _ = forward(params, cfg, x)
    return logits
