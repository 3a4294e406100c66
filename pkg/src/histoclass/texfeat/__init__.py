"""Texture descriptors for the traditional feature + SVM track."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .glcm import Glcm, glcm_compute, haralick, haralick_per_direction
from .lbp import lbp_codes, lbp_hist, rlbp_hist, urlbp_hist
from .lpq import lpq_codes, lpq_hist, rlpq_codes, rlpq_hist

DESCRIPTOR_LENGTHS = {
    "lbp": 256,
    "rlbp": 36,
    "urlbp": 10,
    "lpq": 256,
    "rlpq": 256,
    "haralick": 4,
}
HISTOGRAM_DESCRIPTORS = ("lbp", "rlbp", "urlbp", "lpq", "rlpq")


class UnknownDescriptorError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureVector:
    descriptor_id: str
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).ravel()
        object.__setattr__(self, "values", values)
        expected = DESCRIPTOR_LENGTHS.get(self.descriptor_id)
        if expected is None and self.descriptor_id != "concat":
            raise UnknownDescriptorError(self.descriptor_id)
        if expected is not None and values.size != expected:
            raise ValueError(f"{self.descriptor_id} expects {expected} values, got {values.size}")

    def __len__(self):
        return self.values.size


def concat(a: FeatureVector, b: FeatureVector) -> FeatureVector:
    return FeatureVector("concat", np.concatenate([a.values, b.values]))


_FUNCS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "lbp": lbp_hist,
    "rlbp": rlbp_hist,
    "urlbp": urlbp_hist,
    "lpq": lpq_hist,
    "rlpq": rlpq_hist,
    "haralick": lambda img: haralick(glcm_compute(img)),
}


def descriptor_names() -> list[str]:
    """Single descriptors plus the combinations evaluated in the experiment grid."""
    return list(_FUNCS) + ["rlpq+rlbp"]


def compute(img: np.ndarray, descriptor: str) -> FeatureVector:
    """Compute a descriptor by id; ``a+b`` concatenates descriptors in order."""
    parts = descriptor.split("+")
    for p in parts:
        if p not in _FUNCS:
            raise UnknownDescriptorError(f"unknown descriptor {p!r}")
    vecs = [FeatureVector(p, _FUNCS[p](img)) for p in parts]
    out = vecs[0]
    for v in vecs[1:]:
        out = concat(out, v)
    return out


def descriptor_length(descriptor: str) -> int:
    try:
        return sum(DESCRIPTOR_LENGTHS[p] for p in descriptor.split("+"))
    except KeyError as exc:
        raise UnknownDescriptorError(f"unknown descriptor {exc.args[0]!r}") from None


def write_feature_csv(path: Path, rows: Iterable[tuple[str, str, int, FeatureVector]],
                      descriptor: str) -> int:
    """Write ``image_id,patch_tag,label,descriptor_id,v0..vK`` rows; returns row count."""
    n_vals = descriptor_length(descriptor)
    count = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["image_id", "patch_tag", "label", "descriptor_id"]
                   + [f"v{i}" for i in range(n_vals)])
        for image_id, tag, label, fv in rows:
            w.writerow([image_id, tag, int(label), descriptor] + [repr(float(v)) for v in fv.values])
            count += 1
    return count


def read_feature_csv(path: Path):
    """Inverse of write_feature_csv: (meta rows, values array)."""
    meta, values = [], []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        next(r)
        for row in r:
            meta.append((row[0], row[1], int(row[2]), row[3]))
            values.append([float(v) for v in row[4:]])
    return meta, np.array(values)


__all__ = [
    "FeatureVector", "Glcm", "concat", "compute", "descriptor_names", "descriptor_length",
    "glcm_compute", "haralick", "haralick_per_direction", "lbp_codes", "lbp_hist", "rlbp_hist",
    "urlbp_hist", "lpq_codes", "lpq_hist", "rlpq_codes", "rlpq_hist", "write_feature_csv",
    "read_feature_csv", "UnknownDescriptorError", "DESCRIPTOR_LENGTHS",
]
