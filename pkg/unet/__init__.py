"""
Numpy U-Net: layers, model, optimizer and checkpoints
"""

from .config import NetConfig, Tensor4, ShapeError
from .model import (NetParams, Tape, TapeMismatchError, init_model, forward, backward, param_shapes,
                    parameter_count, receptive_radius, predict_logits)
from .optim import AdamHyper, AdamState, opt_step
from .checkpoint import save_checkpoint, load_checkpoint, CheckpointFormatError, ArchitectureMismatchError

__all__ = ['NetConfig', 'Tensor4', 'ShapeError', 'NetParams', 'Tape', 'TapeMismatchError', 'init_model',
           'forward', 'backward', 'param_shapes', 'parameter_count', 'receptive_radius', 'predict_logits',
           'AdamHyper', 'AdamState', 'opt_step', 'save_checkpoint', 'load_checkpoint',
           'CheckpointFormatError', 'ArchitectureMismatchError']
