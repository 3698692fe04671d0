"""Mini-batch training loop with a region-based train/validation split."""

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from unet import AdamState, NetConfig, NetParams, ShapeError, backward, forward, init_model, opt_step
from .augment import CowMixConfig, cow_batch_mix, cow_mask, dihedral_augment
from .dataset import (Region, TrainingData, check_regions, require_labeled, sample_train_windows,
                      validation_windows)
from .loss import FocalConfig, focal_loss

logger = logging.getLogger(__name__)

PRECISIONS = {"float32": np.float32, "float64": np.float64}


@dataclass(frozen=True)
class TrainConfig:
    tile_px: int = 128
    batch_size: int = 4
    epochs: int = 10
    seed: int = 0
    learning_rate: float = 1e-3
    val_regions: Tuple[Region, ...] = ()
    tiles_per_epoch: int = 32
    dihedral: bool = True
    precision: str = "float32"

    def __post_init__(self):
        object.__setattr__(self, "val_regions", tuple(tuple(int(v) for v in r) for r in self.val_regions))
        for region in self.val_regions:
            if len(region) != 4:
                raise ValueError(f"validation region must be (col0, row0, width, height), got {region}")
        if self.tile_px < 1 or self.batch_size < 1 or self.epochs < 1 or self.tiles_per_epoch < 1:
            raise ValueError("tile_px, batch_size, epochs and tiles_per_epoch must be >= 1")
        if not self.learning_rate >= 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.precision not in PRECISIONS:
            raise ValueError(f"precision must be one of {sorted(PRECISIONS)}, got {self.precision!r}")

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> "TrainConfig":
        return cls(**dict(config or {}))


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    train_loss: float
    val_loss: float


def _augment_batch(samples: List, train_cfg: TrainConfig, cow_cfg: CowMixConfig,
                   rng: np.random.Generator) -> List:
    if train_cfg.dihedral:
        samples = [dihedral_augment(s, int(rng.integers(8))) for s in samples]
    if len(samples) < 2 or cow_cfg.apply_probability == 0:
        return samples
    mixed = list(samples)
    size = train_cfg.tile_px
    for i in range(len(samples)):
        if rng.random() >= cow_cfg.apply_probability:
            continue
        partner = int(rng.integers(len(samples) - 1))
        partner += partner >= i
        mixed[i] = cow_batch_mix(samples[i], samples[partner], cow_mask(size, size, cow_cfg, rng))
    return mixed


def _stack(samples: List, dtype) -> Tuple[np.ndarray, np.ndarray]:
    return np.stack([f for f, _ in samples]).astype(dtype), np.stack([lab for _, lab in samples])


def validation_loss(params: NetParams, net_cfg: NetConfig, data: TrainingData, windows: Sequence[Tuple[int, int]],
                    tile_px: int, focal_cfg: FocalConfig, dtype=np.float32) -> float:
    """Mean focal loss over validation tiles; NaN when there are none."""
    if not windows:
        return float("nan")
    losses = []
    for row0, col0 in windows:
        x, y = _stack([data.tile(row0, col0, tile_px)], dtype)
        logits, _ = forward(params, net_cfg, x)
        losses.append(focal_loss(logits, y, focal_cfg)[0])
    return float(np.mean(losses))


def train_epochs(data: TrainingData, train_cfg: TrainConfig, net_cfg: NetConfig, focal_cfg: FocalConfig,
                 cow_cfg: CowMixConfig, params: Optional[NetParams] = None) -> Tuple[NetParams, List[EpochMetrics]]:
    """Train from scratch (or from ``params``) and report per-epoch losses.

    One generator seeded with ``train_cfg.seed`` drives initialization, tile
    sampling and augmentation, so equal inputs give bit-identical results.
    """
    if train_cfg.tile_px % net_cfg.divisor:
        raise ShapeError(f"tile_px {train_cfg.tile_px} is not divisible by {net_cfg.divisor}")
    check_regions(data.shape, train_cfg.val_regions, train_cfg.tile_px)
    n_labeled = require_labeled(data, train_cfg.val_regions)

    dtype = PRECISIONS[train_cfg.precision]
    rng = np.random.default_rng(train_cfg.seed)
    params = init_model(net_cfg, rng) if params is None else params
    params = params.astype(dtype)
    state = AdamState()
    val_windows = validation_windows(train_cfg.val_regions, train_cfg.tile_px)
    logger.info("Training %d epochs on %d labeled pixels, %d validation tiles", train_cfg.epochs,
                n_labeled, len(val_windows))

    metrics = []
    for epoch in range(1, train_cfg.epochs + 1):
        windows = sample_train_windows(data.shape, train_cfg.val_regions, train_cfg.tile_px,
                                       train_cfg.tiles_per_epoch, rng)
        losses = []
        for start in range(0, len(windows), train_cfg.batch_size):
            batch = [data.tile(r, c, train_cfg.tile_px) for r, c in windows[start:start + train_cfg.batch_size]]
            x, y = _stack(_augment_batch(batch, train_cfg, cow_cfg, rng), dtype)
            logits, tape = forward(params, net_cfg, x)
            loss, dlogits = focal_loss(logits, y, focal_cfg)
            grads = backward(params, net_cfg, tape, dlogits)
            params, state = opt_step(params, grads, state, train_cfg.learning_rate)
            losses.append(loss)
            logger.debug("epoch %d batch %d: loss %.6f", epoch, start // train_cfg.batch_size, loss)

        val = validation_loss(params, net_cfg, data, val_windows, train_cfg.tile_px, focal_cfg, dtype)
        metrics.append(EpochMetrics(epoch, float(np.mean(losses)), val))
        logger.info("epoch %d/%d: train loss %.6f, val loss %s", epoch, train_cfg.epochs, metrics[-1].train_loss,
                    "n/a" if math.isnan(val) else f"{val:.6f}")
    return params, metrics


def write_metrics_csv(metrics: Sequence[EpochMetrics], path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for m in metrics:
            writer.writerow([m.epoch, repr(m.train_loss), repr(m.val_loss)])


def read_metrics_csv(path: Union[str, Path]) -> List[EpochMetrics]:
    with open(path, newline="") as f:
        return [EpochMetrics(int(row["epoch"]), float(row["train_loss"]), float(row["val_loss"]))
                for row in csv.DictReader(f)]
