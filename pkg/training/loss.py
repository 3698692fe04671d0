"""Class-weighted focal loss with a low-probability cut-off."""

import logging
from dataclasses import dataclass, replace
from typing import Any, Dict, Sequence, Tuple, Union

import numpy as np

from raster.grid import NUM_CLASSES, UNLABELED, LabelGrid
from unet.config import ShapeError

logger = logging.getLogger(__name__)


class ClassFrequencyError(ValueError):
    """A class has no labeled pixels, so its inverse-frequency weight is undefined."""


@dataclass(frozen=True)
class FocalConfig:
    gamma: float = 3.0
    cutoff_p: float = 0.1
    class_weights: Tuple[float, ...] = (1.0, 1.0, 1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "class_weights", tuple(float(w) for w in self.class_weights))
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if not 0 <= self.cutoff_p < 1:
            raise ValueError(f"cutoff_p must be in [0, 1), got {self.cutoff_p}")
        if len(self.class_weights) != NUM_CLASSES:
            raise ValueError(f"class_weights needs {NUM_CLASSES} values, got {len(self.class_weights)}")
        if min(self.class_weights) < 0 or max(self.class_weights) <= 0:
            raise ValueError("class_weights must be nonnegative with at least one positive value")

    def with_weights(self, weights: Sequence[float]) -> "FocalConfig":
        return replace(self, class_weights=tuple(weights))

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> "FocalConfig":
        return cls(**dict(config or {}))


def class_weights(labels: Union[LabelGrid, np.ndarray]) -> np.ndarray:
    """Inverse-frequency weights N / (4 * N_c) over labeled pixels."""
    codes = labels.samples if isinstance(labels, LabelGrid) else np.asarray(labels)
    counts = np.bincount(codes.ravel(), minlength=256)[:NUM_CLASSES].astype(np.float64)
    missing = [c for c in range(NUM_CLASSES) if counts[c] == 0]
    if missing:
        raise ClassFrequencyError(f"classes {missing} have no labeled pixels; set weights manually")
    weights = counts.sum() / (NUM_CLASSES * counts)
    logger.info("Class weights from %d labeled pixels: %s", int(counts.sum()), np.round(weights, 4).tolist())
    return weights


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def focal_loss(logits: np.ndarray, labels: np.ndarray, cfg: FocalConfig) -> Tuple[float, np.ndarray]:
    """Mean focal loss over labeled pixels and its gradient w.r.t. the logits.

    ``logits`` is (B, 4, H, W), ``labels`` (B, H, W) with 255 for unlabeled.
    A pixel whose true-class probability is at or below ``cutoff_p`` adds
    nothing but still counts in the denominator.
    """
    labels = np.asarray(labels)
    if logits.ndim != 4 or logits.shape[1] != NUM_CLASSES:
        raise ShapeError(f"logits must be (batch, {NUM_CLASSES}, H, W), got {logits.shape}")
    if labels.shape != (logits.shape[0],) + logits.shape[2:]:
        raise ShapeError(f"labels {labels.shape} do not match logits {logits.shape}")

    dtype = np.float64 if logits.dtype == np.float64 else np.float32
    labeled = labels != UNLABELED
    n_labeled = int(np.count_nonzero(labeled))
    dlogits = np.zeros(logits.shape, dtype=dtype)
    if n_labeled == 0:
        return 0.0, dlogits

    logp = _log_softmax(logits.astype(np.float64))
    probs = np.exp(logp)
    target = np.where(labeled, labels, 0).astype(np.intp)
    logp_t = np.take_along_axis(logp, target[:, None], axis=1)[:, 0]
    p_t = np.exp(logp_t)
    active = labeled & (p_t > cfg.cutoff_p)
    weight = np.asarray(cfg.class_weights, dtype=np.float64)[target]

    one_minus = 1.0 - p_t
    focal = one_minus ** cfg.gamma
    contrib = np.where(active, weight * focal * -logp_t, 0.0)
    loss = float(contrib.sum() / n_labeled)

    # d/dz_j of w f(p_t) equals w p_t f'(p_t) (delta_tj - p_j).
    if cfg.gamma > 0:
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = np.where(one_minus > 0, cfg.gamma * one_minus ** (cfg.gamma - 1) * p_t * -logp_t, 0.0)
    else:
        slope = 0.0
    p_fprime = -slope - focal
    scale = np.where(active, weight * p_fprime / n_labeled, 0.0)
    onehot = np.eye(NUM_CLASSES, dtype=np.float64)[target].transpose(0, 3, 1, 2)
    dlogits[...] = scale[:, None] * (onehot - probs)
    return loss, dlogits
