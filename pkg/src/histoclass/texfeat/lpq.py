"""Local phase quantization (LPQ) and its rotation-invariant variant.

LPQ: at every valid pixel, short-term Fourier coefficients are taken at the
four lowest non-zero frequencies ``(a,0), (0,a), (a,a), (a,-a)`` with
``a = 1/win`` over a Gaussian-weighted ``win x win`` window (sigma = win/4).
The filters are made DC-free so that flat regions give zero coefficients.
The real and imaginary parts are sign-quantized into an 8-bit code

    bit 0..3 = Re F(u1..u4) > 0,   bit 4..7 = Im F(u1..u4) > 0

with |value| <= ZERO_TOL treated as zero (bit 0).

Rotation-invariant LPQ estimates a characteristic orientation per pixel from
Im F sampled on a circle of ``N_ORIENT`` frequencies of radius ``a``,
snaps it to one of ``N_BINS`` precomputed angles and evaluates the LPQ filters
rotated by that angle. Frequencies are expressed in (x = column, y = row).
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

ZERO_TOL = 1e-9
N_ORIENT = 36
N_BINS = 36


def gaussian_window(win: int, sigma: float | None = None) -> np.ndarray:
    sigma = win / 4.0 if sigma is None else sigma
    r = (win - 1) / 2.0
    y, x = np.mgrid[0:win, 0:win] - r
    return np.exp(-(x * x + y * y) / (2.0 * sigma * sigma))


def base_frequencies(win: int) -> np.ndarray:
    a = 1.0 / win
    return np.array([[a, 0.0], [0.0, a], [a, a], [a, -a]])


def stft_filters(win: int, freqs: np.ndarray) -> np.ndarray:
    """(n_freq, win, win) complex DC-free filters for (fx, fy) frequencies."""
    g = gaussian_window(win)
    r = (win - 1) / 2.0
    y, x = np.mgrid[0:win, 0:win] - r
    phase = -2j * np.pi * (freqs[:, 0, None, None] * x + freqs[:, 1, None, None] * y)
    h = g * np.exp(phase)
    h -= g * (h.sum(axis=(1, 2)) / g.sum())[:, None, None]
    return h


def _windows(img: np.ndarray, win: int) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or min(img.shape) < win:
        raise ValueError(f"image {img.shape} smaller than {win}x{win} window")
    return sliding_window_view(img, (win, win))


def quantize_codes(coeffs: np.ndarray) -> np.ndarray:
    """coeffs (..., 4) complex -> (...) uint8 codes."""
    parts = np.concatenate([coeffs.real, coeffs.imag], axis=-1)
    bits = (parts > ZERO_TOL).astype(np.uint8)
    return (bits << np.arange(8, dtype=np.uint8)).sum(axis=-1).astype(np.uint8)


def lpq_codes(img: np.ndarray, win: int = 3) -> np.ndarray:
    w = _windows(img, win)
    h = stft_filters(win, base_frequencies(win))
    coeffs = np.tensordot(w, h, axes=([2, 3], [1, 2]))
    return quantize_codes(coeffs)


def _hist(codes: np.ndarray) -> np.ndarray:
    counts = np.bincount(codes.ravel(), minlength=256).astype(np.float64)
    return counts / counts.sum()


def lpq_hist(img, win: int = 3) -> np.ndarray:
    return _hist(lpq_codes(img, win))


# -- rotation invariant ----------------------------------------------------

def orientation_angles() -> np.ndarray:
    return 2 * np.pi * np.arange(N_ORIENT) / N_ORIENT


def rotate_frequencies(freqs: np.ndarray, theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return freqs @ np.array([[c, s], [-s, c]])


@lru_cache(maxsize=8)
def _ri_filters(win: int):
    """Orientation filter (win*win, 2) and per-bin LPQ banks (N_BINS, 8, win*win)."""
    a = 1.0 / win
    half = orientation_angles()[: N_ORIENT // 2]
    circle = a * np.stack([np.cos(half), np.sin(half)], axis=1)
    im_parts = stft_filters(win, circle).imag.reshape(len(half), -1)
    # b = sum_i Im F(v_i) e^{j phi_i}; the opposite half-circle carries -Im F
    # and -e^{j phi}, so it only doubles b and can be dropped
    b_filter = np.exp(1j * half) @ im_parts
    orient = np.stack([b_filter.real, b_filter.imag], axis=1)
    base = base_frequencies(win)
    bank = []
    for k in range(N_BINS):
        h = stft_filters(win, rotate_frequencies(base, 2 * np.pi * k / N_BINS))
        bank.append(np.concatenate([h.real, h.imag]).reshape(8, -1))
    return orient, np.stack(bank)


def _orientation_bins(flat: np.ndarray, win: int) -> np.ndarray:
    orient, _ = _ri_filters(win)
    b = flat @ orient
    xi = np.mod(np.arctan2(b[:, 1], b[:, 0]), 2 * np.pi)
    return np.rint(xi / (2 * np.pi / N_BINS)).astype(np.intp) % N_BINS


def characteristic_orientation(img: np.ndarray, win: int = 7) -> np.ndarray:
    """Angle bin (0..N_BINS-1) of every valid pixel."""
    w = _windows(img, win)
    return _orientation_bins(w.reshape(-1, win * win), win).reshape(w.shape[:2])


def rlpq_codes(img: np.ndarray, win: int = 7) -> np.ndarray:
    w = _windows(img, win)
    flat = w.reshape(-1, win * win)
    bins = _orientation_bins(flat, win)
    _, bank = _ri_filters(win)
    order = np.argsort(bins, kind="stable")
    grouped = flat[order]
    bounds = np.searchsorted(bins[order], np.arange(N_BINS + 1))
    parts = np.empty((flat.shape[0], 8))
    for k in range(N_BINS):
        lo, hi = bounds[k], bounds[k + 1]
        if hi > lo:
            parts[order[lo:hi]] = grouped[lo:hi] @ bank[k].T
    bits = (parts > ZERO_TOL).astype(np.uint8)
    codes = (bits << np.arange(8, dtype=np.uint8)).sum(axis=-1).astype(np.uint8)
    return codes.reshape(w.shape[:2])


def rlpq_hist(img, win: int = 7) -> np.ndarray:
    return _hist(rlpq_codes(img, win))
