"""Adam optimizer over NetParams."""

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from .config import ShapeError
from .model import NetParams


@dataclass(frozen=True)
class AdamHyper:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    """First/second moment estimates and the number of steps taken."""
    m: Dict[str, np.ndarray] = field(default_factory=OrderedDict)
    v: Dict[str, np.ndarray] = field(default_factory=OrderedDict)
    step: int = 0

    @classmethod
    def zeros_like(cls, params: NetParams) -> "AdamState":
        return cls(OrderedDict((k, np.zeros_like(t, dtype=np.float64)) for k, t in params.tensors.items()),
                   OrderedDict((k, np.zeros_like(t, dtype=np.float64)) for k, t in params.tensors.items()))


def opt_step(params: NetParams, grads: NetParams, state: AdamState, lr: float,
             hyper: AdamHyper = AdamHyper()) -> Tuple[NetParams, AdamState]:
    """One bias-corrected Adam update; returns new params and state, inputs untouched."""
    if params.names() != grads.names():
        raise ShapeError("gradient names do not match parameter names")
    if not state.m:
        state = AdamState.zeros_like(params)

    step = state.step + 1
    correction1 = 1.0 - hyper.beta1 ** step
    correction2 = 1.0 - hyper.beta2 ** step
    new_tensors, new_m, new_v = OrderedDict(), OrderedDict(), OrderedDict()
    for name, value in params.tensors.items():
        grad = grads[name]
        if grad.shape != value.shape or state.m[name].shape != value.shape:
            raise ShapeError(f"{name}: gradient {grad.shape} vs parameter {value.shape}")
        m = hyper.beta1 * state.m[name] + (1.0 - hyper.beta1) * grad
        v = hyper.beta2 * state.v[name] + (1.0 - hyper.beta2) * np.square(grad, dtype=np.float64)
        update = lr * (m / correction1) / (np.sqrt(v / correction2) + hyper.eps)
        new_tensors[name] = (value - update).astype(value.dtype)
        new_m[name], new_v[name] = m, v
    return NetParams(params.config, new_tensors), AdamState(new_m, new_v, step)
