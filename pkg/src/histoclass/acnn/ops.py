"""Convolution and pooling primitives for the adaptive CNN.

All convolutions follow the correlation index convention

    out(m, n) = sum_r sum_t kernel(r, t) * map(m + r, n + t)

so ``conv2d_valid`` is exactly the forward operator of a CNN neuron and
``conv2d_full`` (zero padding by K-1 on every side) is the operator that
carries deltas backwards when handed the 180-degree rotated kernel.

Pooling trims trailing rows/columns that do not fill a whole block.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv2d_valid(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    kernel = np.asarray(kernel, dtype=float)
    if x.ndim != 2 or kernel.ndim != 2:
        raise ValueError("conv2d_valid expects 2-D map and kernel")
    kh, kw = kernel.shape
    if kh > x.shape[0] or kw > x.shape[1]:
        raise ValueError(f"kernel {kernel.shape} larger than map {x.shape}")
    win = sliding_window_view(x, (kh, kw))
    return np.einsum("mnrt,rt->mn", win, kernel)


def conv2d_full(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    kernel = np.asarray(kernel, dtype=float)
    kh, kw = kernel.shape
    padded = np.pad(np.asarray(x, dtype=float), ((kh - 1, kh - 1), (kw - 1, kw - 1)))
    return conv2d_valid(padded, kernel)


def rot180(kernel: np.ndarray) -> np.ndarray:
    return kernel[..., ::-1, ::-1]


def im2col(maps: np.ndarray, k: int) -> np.ndarray:
    """(C, H, W) -> (C*k*k, Ho*Wo) patch matrix, rows ordered (channel, r, t)."""
    c, h, w = maps.shape
    win = sliding_window_view(maps, (k, k), axis=(1, 2))  # C, Ho, Wo, k, k
    cols = np.ascontiguousarray(win.transpose(0, 3, 4, 1, 2))
    return cols.reshape(c * k * k, (h - k + 1) * (w - k + 1))


def _blocks(x: np.ndarray, ssx: int, ssy: int) -> np.ndarray:
    h = x.shape[-2] // ssx * ssx
    w = x.shape[-1] // ssy * ssy
    if h == 0 or w == 0:
        raise ValueError(f"pool factors ({ssx}, {ssy}) exceed map {x.shape[-2:]}")
    t = x[..., :h, :w]
    return t.reshape(t.shape[:-2] + (h // ssx, ssx, w // ssy, ssy))


def avg_pool(x: np.ndarray, ssx: int, ssy: int) -> np.ndarray:
    return _blocks(np.asarray(x), ssx, ssy).mean(axis=(-3, -1))


def max_pool_local(x: np.ndarray, ssx: int, ssy: int):
    """Max pooling returning the flat in-block index of each winner."""
    b = _blocks(np.asarray(x), ssx, ssy)
    b = np.moveaxis(b, -3, -2)  # ..., Ho, Wo, ssx, ssy
    flat = b.reshape(b.shape[:-2] + (ssx * ssy,))
    idx = flat.argmax(axis=-1)
    return np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0], idx


def max_pool(x: np.ndarray, ssx: int, ssy: int):
    """Returns (pooled, argmax) with argmax[..., m, n] = (row, col) in ``x``."""
    pooled, idx = max_pool_local(x, ssx, ssy)
    ho, wo = pooled.shape[-2:]
    rows = np.arange(ho)[:, None] * ssx + idx // ssy
    cols = np.arange(wo)[None, :] * ssy + idx % ssy
    return pooled, np.stack([rows, cols], axis=-1)


def avg_pool_backward(ds: np.ndarray, in_shape: tuple, ssx: int, ssy: int) -> np.ndarray:
    """Zero-order upsampling of ``ds`` scaled by 1/(ssx*ssy); trimmed cells get 0."""
    up = np.repeat(np.repeat(ds, ssx, axis=-2), ssy, axis=-1) * (1.0 / (ssx * ssy))
    if up.shape == tuple(in_shape):
        return up
    out = np.zeros(in_shape, dtype=ds.dtype)
    out[..., :up.shape[-2], :up.shape[-1]] = up
    return out


def max_pool_backward(ds: np.ndarray, idx: np.ndarray, in_shape: tuple,
                      ssx: int, ssy: int) -> np.ndarray:
    """Route each block's delta to its recorded winner only."""
    onehot = (idx[..., None] == np.arange(ssx * ssy)) * ds[..., None]
    ho, wo = ds.shape[-2:]
    blocks = onehot.reshape(ds.shape[:-2] + (ho, wo, ssx, ssy))
    up = np.moveaxis(blocks, -2, -3).reshape(ds.shape[:-2] + (ho * ssx, wo * ssy))
    if up.shape == tuple(in_shape):
        return up
    out = np.zeros(in_shape, dtype=ds.dtype)
    out[..., :up.shape[-2], :up.shape[-1]] = up
    return out
