"""Source images, patch extraction, augmentation and resampling.

A 640x480 RGB source image is cut into four 300x300 patches (two anchored at
the top edge, two at the bottom edge), each patch is expanded into five
lossless variants (identity, three quarter-turn rotations, transpose), and
the resulting 20 patches are either downsampled to 64x64 network inputs or
converted to grayscale for the texture descriptors.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

PATCH_SIZE = 300
LOWRES_SIZE = 64

POSITIONS = ("TL", "TR", "BL", "BR")
VARIANTS = ("orig", "rot90", "rot180", "rot270", "transpose")

# BT.601 luma
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


class ClassLabel(enum.IntEnum):
    NORMAL = 0
    HP = 1
    TA_LG = 2
    CA = 3

    @property
    def dirname(self) -> str:
        return self.name.lower()

    @classmethod
    def from_dirname(cls, name: str) -> "ClassLabel":
        return cls[name.upper()]

    @property
    def is_cancer(self) -> bool:
        return self is not ClassLabel.NORMAL


class DimensionError(ValueError):
    """Raised when an image is too small for 300x300 patch extraction."""


class DatasetError(Exception):
    """Unreadable or incomplete on-disk dataset."""


@dataclass(frozen=True)
class SourceImage:
    pixels: np.ndarray  # (height, width, 3) uint8
    label: ClassLabel
    image_id: str
    patient_id: str = ""

    def __post_init__(self):
        px = self.pixels
        if px.ndim != 3 or px.shape[2] != 3 or px.dtype != np.uint8:
            raise ValueError(f"expected (H, W, 3) uint8 raster, got {px.shape} {px.dtype}")
        object.__setattr__(self, "label", ClassLabel(self.label))
        if not self.patient_id:
            object.__setattr__(self, "patient_id", self.image_id)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class Patch:
    pixels: np.ndarray  # (300, 300, 3) uint8
    label: ClassLabel
    parent_image_id: str
    position: str
    variant: str = "orig"

    @property
    def tag(self) -> str:
        return f"{self.position}-{self.variant}"


@dataclass(frozen=True)
class LowResPatch:
    planes: np.ndarray  # (3, 64, 64) float in [-1, 1]
    label: ClassLabel
    parent_image_id: str
    tag: str = field(default="")


def patch_anchors(width: int, height: int) -> dict[str, tuple[int, int]]:
    """(row, col) of the top-left corner of each of the four patches."""
    if width < PATCH_SIZE or height < PATCH_SIZE:
        raise DimensionError(
            f"image {width}x{height} is smaller than the {PATCH_SIZE}x{PATCH_SIZE} patch"
        )
    bottom = height - PATCH_SIZE
    right = width - PATCH_SIZE
    return {"TL": (0, 0), "TR": (0, right), "BL": (bottom, 0), "BR": (bottom, right)}


def extract_patches(img: SourceImage) -> list[Patch]:
    anchors = patch_anchors(img.width, img.height)
    patches = []
    for pos in POSITIONS:
        r, c = anchors[pos]
        raster = img.pixels[r:r + PATCH_SIZE, c:c + PATCH_SIZE]
        patches.append(Patch(raster.copy(), img.label, img.image_id, pos))
    return patches


def _variant_raster(pixels: np.ndarray, variant: str) -> np.ndarray:
    # rot90 is clockwise: pixel (r, c) lands on (c, N-1-r)
    if variant == "orig":
        out = pixels
    elif variant == "rot90":
        out = np.rot90(pixels, -1, axes=(0, 1))
    elif variant == "rot180":
        out = np.rot90(pixels, -2, axes=(0, 1))
    elif variant == "rot270":
        out = np.rot90(pixels, -3, axes=(0, 1))
    elif variant == "transpose":
        out = np.swapaxes(pixels, 0, 1)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return np.ascontiguousarray(out)


def augment(p: Patch) -> list[Patch]:
    return [
        Patch(_variant_raster(p.pixels, v), p.label, p.parent_image_id, p.position, v)
        for v in VARIANTS
    ]


def expand(img: SourceImage) -> list[Patch]:
    """All 20 (position, variant) patches of one source image."""
    return [q for p in extract_patches(img) for q in augment(p)]


def _bilinear_axis(n_in: int, n_out: int):
    # half-pixel centre alignment, edge-clamped
    scale = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def resize_bilinear(plane: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Separable bilinear resampling of the first two axes.

    Interpolation is written as ``a + t * (b - a)`` so that constant inputs
    stay exactly constant.
    """
    plane = np.asarray(plane, dtype=np.float64)
    r0, r1, tr = _bilinear_axis(plane.shape[0], out_h)
    c0, c1, tc = _bilinear_axis(plane.shape[1], out_w)
    tr = tr.reshape((-1,) + (1,) * (plane.ndim - 1))
    rows = plane[r0] + tr * (plane[r1] - plane[r0])
    tc = tc.reshape((1, -1) + (1,) * (plane.ndim - 2))
    return rows[:, c0] + tc * (rows[:, c1] - rows[:, c0])


def downsample(p: Patch, size: int = LOWRES_SIZE) -> LowResPatch:
    small = resize_bilinear(p.pixels, size, size)
    planes = np.clip(2.0 * (small / 255.0) - 1.0, -1.0, 1.0)
    return LowResPatch(np.ascontiguousarray(planes.transpose(2, 0, 1)), p.label,
                       p.parent_image_id, p.tag)


def to_grayscale(p: Patch | np.ndarray) -> np.ndarray:
    """Real-valued luminance plane in [0, 255]."""
    px = p.pixels if isinstance(p, Patch) else p
    px = np.asarray(px, dtype=np.float64)
    wr, wg, wb = LUMA_WEIGHTS
    return wr * px[..., 0] + wg * px[..., 1] + wb * px[..., 2]


# -- on-disk dataset -------------------------------------------------------

def load_image(path: Path, label: ClassLabel, patient_id: str = "") -> SourceImage:
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (OSError, ValueError) as exc:
        raise DatasetError(f"cannot read image {path}: {exc}") from exc
    return SourceImage(np.ascontiguousarray(arr), label, path.stem, patient_id)


def read_patients(root: Path) -> dict[str, str]:
    path = Path(root) / "patients.csv"
    if not path.exists():
        return {}
    with open(path, newline="") as fh:
        return {row["image_id"]: row["patient_id"] for row in csv.DictReader(fh)}


def list_dataset(root: Path) -> list[tuple[Path, ClassLabel]]:
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} does not exist")
    entries = []
    for label in ClassLabel:
        d = root / label.dirname
        if not d.is_dir():
            continue
        entries.extend((p, label) for p in sorted(d.glob("*.png")))
    if not entries:
        raise DatasetError(f"no images found under {root}")
    return entries


def load_dataset(root: Path, require_all_classes: bool = True) -> list[SourceImage]:
    """Read ``<root>/<class-name>/<image-id>.png`` plus optional patients.csv."""
    patients = read_patients(root)
    images = [load_image(p, lab, patients.get(p.stem, "")) for p, lab in list_dataset(root)]
    if require_all_classes:
        missing = set(ClassLabel) - {im.label for im in images}
        if missing:
            names = ", ".join(sorted(m.dirname for m in missing))
            raise DatasetError(f"dataset {root} has no images for: {names}")
    ids = [im.image_id for im in images]
    if len(set(ids)) != len(ids):
        raise DatasetError("image ids must be unique across class directories")
    return images
