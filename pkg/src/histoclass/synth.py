"""Synthetic 4-class texture dataset standing in for the private slide images.

Every image is an oriented sinusoidal grating rendered in an H&E-like
pink/purple palette plus Gaussian noise. Classes own disjoint bands of
spatial frequency (cycles per pixel); Normal and HP sit in adjacent bands so
that they are the most confusable pair.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .imaging import ClassLabel, SourceImage

DEFAULT_BANDS = (
    (0.012, 0.018),   # normal
    (0.021, 0.027),   # hp, adjacent to normal
    (0.034, 0.044),   # ta_lg
    (0.055, 0.070),   # ca
)

# (base RGB, modulation RGB)
PALETTE = (np.array([200.0, 140.0, 190.0]), np.array([-45.0, -55.0, -25.0]))


@dataclass(frozen=True)
class SyntheticSpec:
    images_per_class: int = 50
    width: int = 640
    height: int = 480
    bands: tuple = DEFAULT_BANDS
    orientation_band: tuple = (0.0, np.pi)
    noise: float = 12.0
    seed: int = 0
    patients_per_image: float = 0.75

    def __post_init__(self):
        if self.images_per_class < 1:
            raise ValueError("images_per_class must be at least 1 (empty synthetic spec)")
        if len(self.bands) != len(ClassLabel):
            raise ValueError("need one frequency band per class")
        edges = sorted(self.bands)
        for (lo, hi), (lo2, _) in zip(edges, edges[1:]):
            if not lo < hi <= lo2:
                raise ValueError("frequency bands must be non-empty and disjoint")


def render_grating(spec: SyntheticSpec, label: int, rng: np.random.Generator) -> np.ndarray:
    lo, hi = spec.bands[label]
    freq = rng.uniform(lo, hi)
    theta = rng.uniform(*spec.orientation_band)
    phase = rng.uniform(0, 2 * np.pi)
    rows, cols = np.mgrid[0:spec.height, 0:spec.width].astype(np.float64)
    g = np.sin(2 * np.pi * freq * (cols * np.cos(theta) + rows * np.sin(theta)) + phase)
    base, mod = PALETTE
    rgb = base + g[..., None] * mod
    rgb += rng.normal(0.0, spec.noise, size=rgb.shape)
    return np.clip(np.rint(rgb), 0, 255).astype(np.uint8)


def generate(spec: SyntheticSpec) -> list[SourceImage]:
    rng = np.random.default_rng(spec.seed)
    images = []
    for label in ClassLabel:
        for i in range(spec.images_per_class):
            image_id = f"{label.dirname}_{i:03d}"
            patient = f"{label.dirname}_p{int(i * spec.patients_per_image):03d}"
            images.append(SourceImage(render_grating(spec, label, rng), label, image_id, patient))
    return images


def write_dataset(images: list[SourceImage], root: Path) -> None:
    root = Path(root)
    for label in ClassLabel:
        (root / label.dirname).mkdir(parents=True, exist_ok=True)
    for im in images:
        Image.fromarray(im.pixels).save(root / im.label.dirname / f"{im.image_id}.png")
    with open(root / "patients.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["image_id", "patient_id"])
        for im in images:
            w.writerow([im.image_id, im.patient_id])
