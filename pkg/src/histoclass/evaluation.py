"""Cross-validation harness: fold planning, patch voting, confusion matrices and metrics."""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from . import acnn, svm, texfeat
from .imaging import ClassLabel, SourceImage, downsample, expand, to_grayscale

log = logging.getLogger(__name__)

N_CLASSES = len(ClassLabel)
BINARY_NAMES = ("normal", "cancer")
METRIC_NAMES = ("acc", "sen", "spe", "ppr")


# -- fold planning ---------------------------------------------------------

@dataclass(frozen=True)
class Fold:
    index: int
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]


@dataclass(frozen=True)
class FoldPlan:
    k: int
    seed: int
    folds: tuple[Fold, ...]
    group_by_patient: bool = False

    def __iter__(self):
        return iter(self.folds)

    def __len__(self):
        return len(self.folds)


def make_folds(images: Sequence[SourceImage], k: int = 5, seed: int = 0,
               group_by_patient: bool = False) -> FoldPlan:
    """Stratified k-fold split at image level.

    Each class's image ids (or patient groups) are shuffled by ``seed`` and cut
    into k near-equal test blocks. With ``group_by_patient`` all images of a
    patient land in the same test block; a patient is stratified under the
    class of the majority of their images.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    ids = [im.image_id for im in images]
    if len(set(ids)) != len(ids):
        raise ValueError("image ids must be unique")
    by_class: dict[int, list[SourceImage]] = {}
    for im in images:
        by_class.setdefault(int(im.label), []).append(im)
    for c, members in sorted(by_class.items()):
        if len(members) < k:
            raise ValueError(f"class {ClassLabel(c).dirname} has {len(members)} images, "
                             f"fewer than k={k}")

    if group_by_patient:
        members_of: dict[str, list[SourceImage]] = {}
        for im in images:
            members_of.setdefault(im.patient_id, []).append(im)
        groups_by_class: dict[int, list[str]] = {}
        for pid, ims in members_of.items():
            labels = [int(im.label) for im in ims]
            major = max(set(labels), key=lambda c: (labels.count(c), -c))
            groups_by_class.setdefault(major, []).append(pid)
    else:
        members_of = {im.image_id: [im] for im in images}
        groups_by_class = {c: [im.image_id for im in ms] for c, ms in by_class.items()}

    rng = np.random.default_rng(seed)
    test_blocks: list[list[str]] = [[] for _ in range(k)]
    for c in sorted(groups_by_class):
        groups = sorted(groups_by_class[c])
        if len(groups) < k:
            raise ValueError(f"class {ClassLabel(c).dirname} has {len(groups)} patient "
                             f"groups, fewer than k={k}")
        order = rng.permutation(len(groups))
        for f, block in enumerate(np.array_split(order, k)):
            for g in block:
                test_blocks[f].extend(im.image_id for im in members_of[groups[g]])

    all_ids = sorted(ids)
    folds = []
    for f, block in enumerate(test_blocks):
        test = set(block)
        folds.append(Fold(f, tuple(i for i in all_ids if i not in test), tuple(sorted(test))))
    return FoldPlan(k, seed, tuple(folds), group_by_patient)


# -- voting, confusion matrices, metrics -----------------------------------

def vote(patch_scores) -> tuple[int, np.ndarray]:
    """Mean of the patch score vectors and its argmax (ties to the lowest index)."""
    scores = np.asarray(patch_scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("no patch scores to vote on")
    if scores.ndim != 2:
        raise ValueError("expected a list of score vectors")
    mean = scores.mean(axis=0)
    return int(np.argmax(mean)), mean


def confusion_matrix(true, pred, n_classes: int = N_CLASSES) -> np.ndarray:
    """Counts with rows = true class, columns = predicted class."""
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(true, dtype=int), np.asarray(pred, dtype=int)), 1)
    return cm


def collapse(cm4: np.ndarray) -> np.ndarray:
    """Merge every class but Normal into a single cancer class."""
    cm4 = np.asarray(cm4)
    if cm4.ndim != 2 or cm4.shape[0] != cm4.shape[1] or (cm4 < 0).any():
        raise ValueError("expected a square non-negative confusion matrix")
    merge = np.zeros((cm4.shape[0], 2), dtype=cm4.dtype)
    merge[0, 0] = 1
    merge[1:, 1] = 1
    return merge.T @ cm4 @ merge


def _ratio(num: int, den: int) -> float:
    return num / den if den else math.nan


@dataclass(frozen=True)
class MetricsReport:
    acc: float
    sen: float
    spe: float
    ppr: float
    tp: int
    tn: int
    fp: int
    fn: int
    undefined: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["undefined"] = list(self.undefined)
        for name in METRIC_NAMES:
            if name in self.undefined:
                d[name] = None
        return d


def metrics(cm2: np.ndarray) -> MetricsReport:
    """Detection metrics with cancer as the positive class.

    A metric whose denominator is zero is NaN and listed in ``undefined``.
    """
    cm2 = np.asarray(cm2)
    if cm2.shape != (2, 2):
        raise ValueError("expected a 2x2 confusion matrix")
    tn, fp = int(cm2[0, 0]), int(cm2[0, 1])
    fn, tp = int(cm2[1, 0]), int(cm2[1, 1])
    values = {
        "acc": _ratio(tp + tn, tp + tn + fp + fn),
        "sen": _ratio(tp, tp + fn),
        "spe": _ratio(tn, tn + fp),
        "ppr": _ratio(tp, tp + fp),
    }
    undefined = tuple(k for k, v in values.items() if math.isnan(v))
    return MetricsReport(tp=tp, tn=tn, fp=fp, fn=fn, undefined=undefined, **values)


def identification_accuracy(cm4: np.ndarray) -> float:
    cm4 = np.asarray(cm4)
    return _ratio(int(np.trace(cm4)), int(cm4.sum()))


# -- methods ---------------------------------------------------------------

class Method(Protocol):
    name: str

    def describe(self) -> dict: ...

    def prepare(self, img: SourceImage) -> np.ndarray: ...

    def fit(self, X: np.ndarray, y: np.ndarray, groups: np.ndarray): ...

    def scores(self, model, X: np.ndarray) -> np.ndarray: ...

    def save(self, model, path: Path) -> None: ...


@dataclass
class AcnnMethod:
    topology: acnn.Topology = field(default_factory=acnn.Topology)
    config: acnn.TrainingConfig = field(default_factory=acnn.TrainingConfig)
    name: str = "acnn"
    model_suffix: str = ".acnn"

    def describe(self) -> dict:
        return {"method": self.name, "topology": asdict(self.topology),
                "training": asdict(self.config)}

    def prepare(self, img: SourceImage) -> np.ndarray:
        size = self.topology.input_size
        planes = [downsample(p, size).planes for p in expand(img)]
        return np.stack(planes).astype(self.config.dtype)

    def fit(self, X, y, groups):
        net, history = acnn.train(self.topology, X, y, self.config)
        return net, history.to_dict()

    def scores(self, model, X):
        return np.atleast_2d(acnn.predict(model, X))

    def save(self, model, path):
        acnn.save_model(model, path)


@dataclass
class SvmMethod:
    descriptor: str = "rlpq"
    kernel: svm.KernelSpec = field(default_factory=lambda: svm.KernelSpec("polynomial"))
    C: float | None = None
    Cs: tuple = svm.DEFAULT_C_GRID
    gammas: tuple = svm.DEFAULT_GAMMA_GRID
    inner_folds: int = 3
    seed: int = 0
    tol: float = 1e-3
    name: str = "svm"
    model_suffix: str = ".asvm"
    search_gamma: bool = True

    def __post_init__(self):
        texfeat.descriptor_length(self.descriptor)

    def describe(self) -> dict:
        return {"method": self.name, "descriptor": self.descriptor,
                "kernel": asdict(self.kernel), "C": self.C,
                "grid": {"C": list(self.Cs), "gamma": list(self.gammas)} if self.C is None else None,
                "inner_folds": self.inner_folds, "seed": self.seed, "tol": self.tol}

    def prepare(self, img: SourceImage) -> np.ndarray:
        return np.stack([texfeat.compute(to_grayscale(p), self.descriptor).values
                         for p in expand(img)])

    def fit(self, X, y, groups):
        spec = self.kernel
        info = {}
        if self.C is None:
            gammas = self.gammas if self.search_gamma else (spec.gamma,)
            C, gamma, table = svm.grid_search(X, y, spec, self.Cs, gammas, self.inner_folds,
                                              groups=groups, seed=self.seed, tol=self.tol,
                                              return_scores=True)
            if spec.kind != "linear":
                spec = spec.with_gamma(gamma)
            info["grid"] = [{"C": c, "gamma": g, "accuracy": a} for (c, g), a in table.items()]
        else:
            C = self.C
        info.update(C=C, gamma=spec.gamma)
        model = svm.train_multiclass(X, y, C, spec, self.tol)
        info["support_vectors"] = {f"{a}-{b}": len(m.alpha) for (a, b), m in model.machines.items()}
        return model, info

    def scores(self, model, X):
        return svm.predict_batch(model, X)[1]

    def save(self, model, path):
        svm.save_model(model, path)


# -- experiment ------------------------------------------------------------

@dataclass
class ImageResult:
    image_id: str
    true: int
    predicted: int
    mean_scores: list[float]


@dataclass
class FoldResult:
    index: int
    cm4: np.ndarray
    images: list[ImageResult]
    fit_info: dict
    seconds: float
    model_path: str | None = None

    def to_dict(self) -> dict:
        return {"fold": self.index, "cm4": self.cm4.tolist(),
                "identification_accuracy": identification_accuracy(self.cm4),
                "detection": metrics(collapse(self.cm4)).to_dict(),
                "images": [asdict(r) for r in self.images], "fit": self.fit_info,
                "seconds": self.seconds, "model_path": self.model_path}


@dataclass
class ExperimentReport:
    method: dict
    plan: FoldPlan
    folds: list[FoldResult]
    seed: int = 0
    config: dict = field(default_factory=dict)

    @property
    def cm4(self) -> np.ndarray:
        return sum((f.cm4 for f in self.folds), np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64))

    @property
    def cm2(self) -> np.ndarray:
        return collapse(self.cm4)

    @property
    def detection(self) -> MetricsReport:
        return metrics(self.cm2)

    @property
    def identification_accuracy(self) -> float:
        return identification_accuracy(self.cm4)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "seed": self.seed,
            "config": self.config,
            "folds_k": self.plan.k,
            "group_by_patient": self.plan.group_by_patient,
            "cm_final": self.cm4.tolist(),
            "cm_binary": self.cm2.tolist(),
            "identification_accuracy": self.identification_accuracy,
            "detection": self.detection.to_dict(),
            "per_fold": [f.to_dict() for f in self.folds],
        }

    def write_json(self, path: Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, default=_json_default))

    def csv_row(self) -> dict:
        """Flat summary: one row per (method, kernel/config), accuracies in percent."""
        m = self.method
        kernel = m.get("kernel", {}).get("kind", "") if isinstance(m.get("kernel"), dict) else ""
        det = self.detection
        pct = lambda v: "" if math.isnan(v) else round(100.0 * v, 2)  # noqa: E731
        return {
            "method": m.get("descriptor", m.get("method", "")),
            "kernel": kernel,
            "identification": pct(self.identification_accuracy),
            "detection": pct(det.acc),
            "sensitivity": pct(det.sen),
            "specificity": pct(det.spe),
            "precision": pct(det.ppr),
            "n_images": int(self.cm4.sum()),
            "seed": self.seed,
        }


CSV_FIELDS = ("method", "kernel", "identification", "detection", "sensitivity",
              "specificity", "precision", "n_images", "seed")


def append_csv(path: Path, rows: Sequence[dict]) -> None:
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with open(path, "a", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        if new:
            w.writeheader()
        w.writerows(rows)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, float) and math.isnan(o):
        return None
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _run_fold(method: Method, fold: Fold, prepared: dict, labels: dict,
              model_dir: Path | None) -> FoldResult:
    t0 = time.perf_counter()
    X = np.concatenate([prepared[i] for i in fold.train_ids])
    y = np.concatenate([np.full(len(prepared[i]), labels[i]) for i in fold.train_ids])
    groups = np.concatenate([np.full(len(prepared[i]), n) for n, i in enumerate(fold.train_ids)])
    model, info = method.fit(X, y, groups)
    results = []
    for image_id in fold.test_ids:
        cls, mean = vote(method.scores(model, prepared[image_id]))
        results.append(ImageResult(image_id, labels[image_id], cls, mean.tolist()))
    cm4 = confusion_matrix([r.true for r in results], [r.predicted for r in results])
    path = None
    if model_dir is not None:
        path = str(Path(model_dir) / f"fold{fold.index}{method.model_suffix}")
        method.save(model, path)
    secs = time.perf_counter() - t0
    log.info("fold %d: identification %.3f (%.1f s)", fold.index,
             identification_accuracy(cm4), secs)
    return FoldResult(fold.index, cm4, results, info, secs, path)


def run_experiment(images: Sequence[SourceImage], method: Method, plan: FoldPlan,
                   jobs: int = 1, model_dir: Path | None = None, seed: int = 0,
                   config: dict | None = None) -> ExperimentReport:
    """Train and test ``method`` on every fold and accumulate the confusion matrices.

    Each image is prepared once (patch expansion plus method-specific inputs)
    and reused across folds. ``jobs > 1`` runs folds in worker processes;
    fold results are merged in fold order so the report does not depend on it.
    """
    labels = {im.image_id: int(im.label) for im in images}
    covered = [i for f in plan for i in f.test_ids]
    if sorted(covered) != sorted(labels):
        raise ValueError("fold plan does not match the dataset")
    t0 = time.perf_counter()
    prepared = {im.image_id: method.prepare(im) for im in images}
    log.info("prepared %d images in %.1f s", len(prepared), time.perf_counter() - t0)
    if model_dir is not None:
        Path(model_dir).mkdir(parents=True, exist_ok=True)
    if jobs > 1 and len(plan) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            futures = [ex.submit(_run_fold, method, f, prepared, labels, model_dir) for f in plan]
            folds = [fu.result() for fu in futures]
    else:
        folds = [_run_fold(method, f, prepared, labels, model_dir) for f in plan]
    return ExperimentReport(method.describe(), plan, folds, seed, config or {})
