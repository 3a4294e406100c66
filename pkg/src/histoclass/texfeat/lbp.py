"""8-neighbour local binary patterns and their rotation-invariant mappings.

Bit ``i`` of a code is set when neighbour ``i`` is >= the centre pixel.
Neighbours are visited clockwise starting at the top-left corner::

    0 1 2
    7 c 3
    6 5 4

so a quarter-turn of the image is a circular shift of the code by 2 bits.
Only interior pixels (full 3x3 neighbourhood) are coded.
"""
from __future__ import annotations

import numpy as np

# (drow, dcol) in bit order
NEIGHBOURS = ((-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1))


def _rotl8(code: int, k: int) -> int:
    k %= 8
    return ((code << k) | (code >> (8 - k))) & 0xFF


def _transitions(code: int) -> int:
    return sum(((code >> i) & 1) != ((code >> ((i + 1) % 8)) & 1) for i in range(8))


def _build_tables():
    min_rot = [min(_rotl8(c, k) for k in range(8)) for c in range(256)]
    classes = sorted(set(min_rot))
    rlbp = np.array([classes.index(m) for m in min_rot], dtype=np.intp)
    riu2 = np.array([bin(c).count("1") if _transitions(c) <= 2 else 9 for c in range(256)],
                    dtype=np.intp)
    return rlbp, riu2, len(classes)


RLBP_TABLE, RIU2_TABLE, N_RLBP = _build_tables()
N_URLBP = 10


def lbp_codes(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or min(img.shape) < 3:
        raise ValueError(f"LBP needs a 2-D image of at least 3x3, got {img.shape}")
    h, w = img.shape
    centre = img[1:-1, 1:-1]
    codes = np.zeros(centre.shape, dtype=np.uint8)
    for bit, (dr, dc) in enumerate(NEIGHBOURS):
        nb = img[1 + dr:h - 1 + dr, 1 + dc:w - 1 + dc]
        codes |= (nb >= centre).astype(np.uint8) << bit
    return codes


def _normalised_hist(bins: np.ndarray, n: int) -> np.ndarray:
    counts = np.bincount(bins.ravel(), minlength=n).astype(np.float64)
    return counts / counts.sum()


def lbp_hist(img) -> np.ndarray:
    return _normalised_hist(lbp_codes(img), 256)


def rlbp_hist(img) -> np.ndarray:
    return _normalised_hist(RLBP_TABLE[lbp_codes(img)], N_RLBP)


def urlbp_hist(img) -> np.ndarray:
    return _normalised_hist(RIU2_TABLE[lbp_codes(img)], N_URLBP)
