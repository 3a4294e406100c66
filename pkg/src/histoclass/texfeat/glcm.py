"""Gray-level co-occurrence matrices and four Haralick statistics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# distance-1 offsets (drow, dcol) for 0, 45, 90 and 135 degrees
OFFSETS = ((0, 1), (-1, 1), (-1, 0), (-1, -1))
HARALICK_NAMES = ("contrast", "correlation", "energy", "homogeneity")


@dataclass(frozen=True)
class Glcm:
    levels: int
    matrices: np.ndarray  # (4, levels, levels), each symmetric and summing to 1


def quantize(img: np.ndarray, levels: int) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    q = np.floor(img * (levels / 256.0)).astype(np.intp)
    return np.clip(q, 0, levels - 1)


def _pairs(q: np.ndarray, dr: int, dc: int):
    h, w = q.shape
    r0, r1 = max(0, -dr), h - max(0, dr)
    c0, c1 = max(0, -dc), w - max(0, dc)
    return q[r0:r1, c0:c1], q[r0 + dr:r1 + dr, c0 + dc:c1 + dc]


def glcm_compute(img: np.ndarray, levels: int = 32) -> Glcm:
    img = np.asarray(img)
    if img.ndim != 2 or min(img.shape) < 2:
        raise ValueError(f"GLCM needs a 2-D image of at least 2x2, got {img.shape}")
    q = quantize(img, levels)
    mats = np.zeros((len(OFFSETS), levels, levels))
    for d, (dr, dc) in enumerate(OFFSETS):
        a, b = _pairs(q, dr, dc)
        counts = np.bincount((a * levels + b).ravel(), minlength=levels * levels)
        m = counts.reshape(levels, levels).astype(np.float64)
        m = m + m.T
        mats[d] = m / m.sum()
    return Glcm(levels, mats)


def haralick_per_direction(g: Glcm) -> np.ndarray:
    """(4 directions, 4 statistics) in HARALICK_NAMES order."""
    L = g.levels
    i, j = np.indices((L, L), dtype=np.float64)
    out = np.empty((len(g.matrices), 4))
    for d, p in enumerate(g.matrices):
        contrast = np.sum(p * (i - j) ** 2)
        mu_i, mu_j = np.sum(p * i), np.sum(p * j)
        var_i = np.sum(p * (i - mu_i) ** 2)
        var_j = np.sum(p * (j - mu_j) ** 2)
        if var_i <= 1e-12 or var_j <= 1e-12:
            corr = 1.0  # single occupied level: constant image
        else:
            corr = np.sum(p * (i - mu_i) * (j - mu_j)) / np.sqrt(var_i * var_j)
        energy = np.sum(p * p)
        homogeneity = np.sum(p / (1.0 + np.abs(i - j)))
        out[d] = contrast, corr, energy, homogeneity
    return out


def haralick(g: Glcm) -> np.ndarray:
    return haralick_per_direction(g).mean(axis=0)
