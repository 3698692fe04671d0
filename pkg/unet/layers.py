"""Layer primitives with exact backward passes.

Every ``*_forward`` returns ``(output, cache)`` and the matching
``*_backward`` takes the upstream gradient plus that cache. Tensors are
``(batch, channels, height, width)``.
"""

from typing import Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def reflect_pad(x: np.ndarray) -> np.ndarray:
    """One-pixel reflection pad (``b | a b c | b``) of the two spatial axes."""
    return np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)), mode="reflect")


def _fold_axis(g: np.ndarray, axis: int) -> np.ndarray:
    g = np.moveaxis(g, axis, 0)
    if g.shape[0] == 3:
        # A single sample is copied to both sides.
        core = g.sum(axis=0, keepdims=True)
    else:
        core = g[1:-1].copy()
        core[1] += g[0]
        core[-2] += g[-1]
    return np.moveaxis(core, 0, axis)


def reflect_pad_backward(dxp: np.ndarray) -> np.ndarray:
    """Fold the gradient of the padded ring back onto the samples it copied."""
    return np.ascontiguousarray(_fold_axis(_fold_axis(dxp, 2), 3))


def conv3x3_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, tuple]:
    """3x3 cross-correlation with reflection padding; ``w`` is (out, in, 3, 3)."""
    xp = reflect_pad(x)
    windows = sliding_window_view(xp, (3, 3), axis=(2, 3))  # (B, C, H, W, 3, 3)
    out = np.tensordot(windows, w, axes=([1, 4, 5], [1, 2, 3]))  # (B, H, W, O)
    out = out.transpose(0, 3, 1, 2) + b[None, :, None, None]
    return np.ascontiguousarray(out), (xp, w)


def conv3x3_backward(dout: np.ndarray, cache: tuple) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    xp, w = cache
    height, width = dout.shape[2], dout.shape[3]
    windows = sliding_window_view(xp, (3, 3), axis=(2, 3))
    dw = np.tensordot(dout, windows, axes=([0, 2, 3], [0, 2, 3]))
    db = dout.sum(axis=(0, 2, 3))
    dxp = np.zeros_like(xp, dtype=np.result_type(dout, w))
    for ki in range(3):
        for kj in range(3):
            contrib = np.tensordot(dout, w[:, :, ki, kj], axes=([1], [0]))  # (B, H, W, C)
            dxp[:, :, ki:ki + height, kj:kj + width] += contrib.transpose(0, 3, 1, 2)
    return reflect_pad_backward(dxp), dw, db


def instance_norm_forward(x: np.ndarray, scale: np.ndarray, shift: np.ndarray,
                          eps: float) -> Tuple[np.ndarray, tuple]:
    """Per-sample, per-channel standardization followed by a learned affine map."""
    mean = x.mean(axis=(2, 3), keepdims=True)
    var = x.var(axis=(2, 3), keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * inv_std
    out = scale[None, :, None, None] * xhat + shift[None, :, None, None]
    return out, (xhat, inv_std, scale)


def instance_norm_backward(dout: np.ndarray, cache: tuple) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    xhat, inv_std, scale = cache
    n = xhat.shape[2] * xhat.shape[3]
    dscale = (dout * xhat).sum(axis=(0, 2, 3))
    dshift = dout.sum(axis=(0, 2, 3))
    dxhat = dout * scale[None, :, None, None]
    dx = (inv_std / n) * (n * dxhat
                          - dxhat.sum(axis=(2, 3), keepdims=True)
                          - xhat * (dxhat * xhat).sum(axis=(2, 3), keepdims=True))
    return dx, dscale, dshift


def relu_forward(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    mask = x > 0
    return np.where(mask, x, 0).astype(x.dtype, copy=False), mask


def relu_backward(dout: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return np.where(mask, dout, 0).astype(dout.dtype, copy=False)


def _blocks(x: np.ndarray) -> np.ndarray:
    batch, channels, height, width = x.shape
    # Last axis enumerates each 2x2 window in scan order.
    return (x.reshape(batch, channels, height // 2, 2, width // 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(batch, channels, height // 2, width // 2, 4))


def maxpool_forward(x: np.ndarray) -> Tuple[np.ndarray, tuple]:
    """2x2 stride-2 max pool; ties resolve to the first maximum in scan order."""
    blocks = _blocks(x)
    idx = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
    return out, (idx, x.shape)


def maxpool_backward(dout: np.ndarray, cache: tuple) -> np.ndarray:
    idx, shape = cache
    batch, channels, height, width = shape
    dblocks = np.zeros(dout.shape + (4,), dtype=dout.dtype)
    np.put_along_axis(dblocks, idx[..., None], dout[..., None], axis=-1)
    return (dblocks.reshape(batch, channels, height // 2, width // 2, 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(shape))


def upconv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, tuple]:
    """2x2 stride-2 transposed convolution; ``w`` is (in, out, 2, 2)."""
    batch, _, height, width = x.shape
    out_channels = w.shape[1]
    t = np.tensordot(x, w, axes=([1], [0]))  # (B, H, W, O, 2, 2)
    out = t.transpose(0, 3, 1, 4, 2, 5).reshape(batch, out_channels, 2 * height, 2 * width)
    return out + b[None, :, None, None], (x, w)


def upconv_backward(dout: np.ndarray, cache: tuple) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    x, w = cache
    batch, _, height, width = x.shape
    d6 = dout.reshape(batch, dout.shape[1], height, 2, width, 2)
    dw = np.tensordot(x, d6, axes=([0, 2, 3], [0, 2, 4]))  # (C, O, 2, 2)
    dx = np.tensordot(d6, w, axes=([1, 3, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    db = dout.sum(axis=(0, 2, 3))
    return np.ascontiguousarray(dx), dw, db


def conv1x1_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, tuple]:
    """Pointwise convolution; ``w`` is (out, in, 1, 1)."""
    out = np.tensordot(x, w[:, :, 0, 0], axes=([1], [1])).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(out) + b[None, :, None, None], (x, w)


def conv1x1_backward(dout: np.ndarray, cache: tuple) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    x, w = cache
    dw = np.tensordot(dout, x, axes=([0, 2, 3], [0, 2, 3]))[:, :, None, None]
    dx = np.tensordot(dout, w[:, :, 0, 0], axes=([1], [0])).transpose(0, 3, 1, 2)
    db = dout.sum(axis=(0, 2, 3))
    return np.ascontiguousarray(dx), dw, db
