"""Kernel SVM trained by sequential minimal optimization.

The binary solver works on the dual

    min_a  1/2 a'Qa - e'a   s.t.  0 <= a_i <= C,  y'a = 0,   Q_ij = y_i y_j K(x_i, x_j)

picking the maximal violating pair each step and stopping once the pair's
violation ``m(a) - M(a)`` drops below ``tol``. Multiclass problems use one
machine per class pair with majority voting.
"""
from __future__ import annotations

import itertools
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import container
from .container import ModelFormatError, Reader

log = logging.getLogger(__name__)

KERNELS = ("linear", "polynomial", "rbf")
KERNEL_ALIASES = {"poly": "polynomial", "linear": "linear", "polynomial": "polynomial",
                  "rbf": "rbf"}
DEFAULT_C_GRID = tuple(2.0 ** e for e in range(-5, 16, 2))
DEFAULT_GAMMA_GRID = tuple(2.0 ** e for e in range(-15, 4, 2))
TAU = 1e-12


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "rbf"
    gamma: float = 1.0
    degree: int = 3
    coef0: float = 0.0

    def __post_init__(self):
        kind = KERNEL_ALIASES.get(self.kind)
        if kind is None:
            raise ValueError(f"unknown kernel {self.kind!r}; choose from {KERNELS}")
        object.__setattr__(self, "kind", kind)
        if kind != "linear" and self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if kind == "polynomial" and self.degree < 1:
            raise ValueError("polynomial degree must be >= 1")

    def with_gamma(self, gamma: float) -> "KernelSpec":
        return KernelSpec(self.kind, gamma, self.degree, self.coef0)


def kernel_eval(spec: KernelSpec, u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"vector length mismatch {u.shape} vs {v.shape}")
    if spec.kind == "linear":
        return float(u @ v)
    if spec.kind == "polynomial":
        return float((spec.gamma * (u @ v) + spec.coef0) ** spec.degree)
    d = u - v
    return float(np.exp(-spec.gamma * (d @ d)))


def kernel_matrix(spec: KernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ValueError("feature dimension mismatch")
    dot = A @ B.T
    if spec.kind == "linear":
        return dot
    if spec.kind == "polynomial":
        return (spec.gamma * dot + spec.coef0) ** spec.degree
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * dot
    return np.exp(-spec.gamma * np.maximum(sq, 0.0))


class _KernelRows:
    """Kernel rows from a full matrix when it fits the cache, else an LRU of rows."""

    def __init__(self, X, spec, K=None, cache_mb: float = 256.0):
        self.X, self.spec = X, spec
        n = len(X)
        if K is None and n * n * 8 <= cache_mb * 2 ** 20:
            K = kernel_matrix(spec, X, X)
        self.K = K
        self.max_rows = max(2, int(cache_mb * 2 ** 20 // max(1, 8 * n)))
        self._rows: OrderedDict = OrderedDict()
        if K is not None:
            self.diag = np.ascontiguousarray(np.diag(K))
        else:
            self.diag = np.array([kernel_eval(spec, x, x) for x in X])

    def row(self, i: int) -> np.ndarray:
        if self.K is not None:
            return self.K[i]
        r = self._rows.get(i)
        if r is None:
            r = kernel_matrix(self.spec, self.X[i:i + 1], self.X)[0]
            self._rows[i] = r
            if len(self._rows) > self.max_rows:
                self._rows.popitem(last=False)
        else:
            self._rows.move_to_end(i)
        return r


@dataclass
class DualSolution:
    alpha: np.ndarray
    b: float
    iterations: int
    gap: float
    converged: bool

    def objective(self, K: np.ndarray, y: np.ndarray) -> float:
        """Dual objective sum(a) - 1/2 a'Qa (to be maximised)."""
        ay = self.alpha * y
        return float(self.alpha.sum() - 0.5 * ay @ K @ ay)


def solve_dual(rows: _KernelRows, y: np.ndarray, C: float, tol: float = 1e-3,
               max_iter: int | None = None) -> DualSolution:
    n = len(y)
    y = np.asarray(y, dtype=float)
    if max_iter is None:
        max_iter = max(10_000_000, 100 * n)
    a = np.zeros(n)
    G = -np.ones(n)
    # at a = 0 every a_i can grow; only negatives can move in the -y_i direction
    up_mask = np.ones(n, dtype=bool)
    low_mask = y < 0
    it = 0
    gap = np.inf
    while it < max_iter:
        vals = -y * G
        i = int(np.argmax(np.where(up_mask, vals, -np.inf)))
        j = int(np.argmin(np.where(low_mask, vals, np.inf)))
        gap = vals[i] - vals[j]
        if gap < tol:
            break
        it += 1
        Ki, Kj = rows.row(i), rows.row(j)
        yi, yj = y[i], y[j]
        ai_old, aj_old = a[i], a[j]
        Qij = yi * yj * Ki[j]
        if yi != yj:
            quad = rows.diag[i] + rows.diag[j] + 2.0 * Qij
            delta = (-G[i] - G[j]) / max(quad, TAU)
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            quad = rows.diag[i] + rows.diag[j] - 2.0 * Qij
            delta = (G[i] - G[j]) / max(quad, TAU)
            total = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0:
                aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            elif ai < 0:
                ai, aj = 0.0, total
        dai, daj = ai - ai_old, aj - aj_old
        a[i], a[j] = ai, aj
        G += (yi * dai) * (y * Ki) + (yj * daj) * (y * Kj)
        for k in (i, j):
            up_mask[k] = a[k] < C if y[k] > 0 else a[k] > 0
            low_mask[k] = a[k] > 0 if y[k] > 0 else a[k] < C
    converged = gap < tol
    if not converged:
        log.warning("SMO stopped after %d iterations with violation %.3g", it, gap)

    vals = -y * G
    free = (a > 0) & (a < C)
    if free.any():
        b = float(vals[free].mean())
    else:
        m = vals[up_mask].max() if up_mask.any() else 0.0
        M = vals[low_mask].min() if low_mask.any() else 0.0
        b = float((m + M) / 2.0)
    return DualSolution(a, b, it, float(gap), converged)


@dataclass
class BinarySvm:
    support_vectors: np.ndarray
    alpha: np.ndarray
    y: np.ndarray
    b: float
    kernel: KernelSpec
    C: float

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if len(self.alpha) == 0:
            return np.full(len(X), self.b)
        return kernel_matrix(self.kernel, X, self.support_vectors) @ (self.alpha * self.y) + self.b

    def predict(self, X) -> np.ndarray:
        return np.where(self.decision_function(X) >= 0, 1, -1)


def _check_binary(y):
    y = np.asarray(y)
    if not np.all(np.isin(y, (-1, 1))):
        raise ValueError("binary labels must be -1 or +1")
    if not ((y == 1).any() and (y == -1).any()):
        raise ValueError("training data must contain both classes")
    return y.astype(float)


def train_binary(X, y, C: float, spec: KernelSpec, tol: float = 1e-3, K=None,
                 cache_mb: float = 256.0, max_iter: int | None = None) -> BinarySvm:
    X = np.asarray(X, dtype=float)
    y = _check_binary(y)
    if C <= 0:
        raise ValueError("C must be positive")
    sol = solve_dual(_KernelRows(X, spec, K, cache_mb), y, C, tol, max_iter)
    sv = sol.alpha > 0
    return BinarySvm(X[sv].copy(), sol.alpha[sv].copy(), y[sv].copy(), sol.b, spec, C)


# -- multiclass ------------------------------------------------------------

@dataclass
class SvmModel:
    classes: tuple
    scale_min: np.ndarray
    scale_range: np.ndarray
    machines: dict = field(default_factory=dict)  # (class_a, class_b) -> BinarySvm

    def scale(self, X) -> np.ndarray:
        return (np.atleast_2d(np.asarray(X, dtype=float)) - self.scale_min) / self.scale_range


def fit_scaling(X):
    X = np.asarray(X, dtype=float)
    lo = X.min(axis=0)
    rng = X.max(axis=0) - lo
    rng[rng == 0] = 1.0
    return lo, rng


def _pair_labels(y, a, b):
    idx = np.flatnonzero((y == a) | (y == b))
    return idx, np.where(y[idx] == a, 1, -1)


def train_multiclass(X, y, C: float, spec: KernelSpec, tol: float = 1e-3,
                     n_classes: int = 4, K=None) -> SvmModel:
    """One-vs-one machines on features scaled to [0, 1] by training min/max.

    ``K`` may hold the kernel matrix of the already scaled training set.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    missing = set(range(n_classes)) - set(np.unique(y).tolist())
    if missing:
        raise ValueError(f"training data lacks classes {sorted(missing)}")
    lo, rng = fit_scaling(X)
    model = SvmModel(tuple(range(n_classes)), lo, rng)
    Xs = model.scale(X)
    for a, b in itertools.combinations(model.classes, 2):
        idx, yy = _pair_labels(y, a, b)
        Kp = None if K is None else K[np.ix_(idx, idx)]
        model.machines[(a, b)] = train_binary(Xs[idx], yy, C, spec, tol, K=Kp)
    return model


def _votes(decisions: dict, n: int, n_classes: int):
    votes = np.zeros((n, n_classes))
    strength = np.zeros((n, n_classes))
    for (a, b), d in decisions.items():
        win_a = d >= 0
        votes[win_a, a] += 1
        votes[~win_a, b] += 1
        strength[:, a] += d
        strength[:, b] -= d
    return votes, strength


def _decide(votes, strength):
    # most votes; then larger summed decision value; then lowest index
    n_classes = votes.shape[1]
    out = np.empty(len(votes), dtype=int)
    for r in range(len(votes)):
        best = max(range(n_classes), key=lambda c: (votes[r, c], strength[r, c], -c))
        out[r] = best
    return out


def predict_batch(model: SvmModel, X):
    """Classes and vote fractions (n, n_classes) for a batch of raw features."""
    Xs = model.scale(X)
    decisions = {pair: m.decision_function(Xs) for pair, m in model.machines.items()}
    votes, strength = _votes(decisions, len(Xs), len(model.classes))
    return _decide(votes, strength), votes / len(model.machines)


def predict(model: SvmModel, x):
    classes, votes = predict_batch(model, np.atleast_2d(x))
    return int(classes[0]), votes[0]


# -- grid search -----------------------------------------------------------

def stratified_folds(y, k: int, seed: int = 0, groups=None) -> list[np.ndarray]:
    """Index arrays of k validation folds, stratified by class.

    With ``groups`` whole groups are assigned to folds so no group straddles
    train and validation.
    """
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    groups = np.arange(len(y)) if groups is None else np.asarray(groups)
    folds = [[] for _ in range(k)]
    for c in np.unique(y):
        g = np.unique(groups[y == c])
        rng.shuffle(g)
        for f, block in enumerate(np.array_split(g, k)):
            folds[f].extend(block.tolist())
    return [np.flatnonzero(np.isin(groups, f)) for f in folds]


def grid_search(X, y, spec: KernelSpec = KernelSpec("rbf"), Cs=DEFAULT_C_GRID,
                gammas=DEFAULT_GAMMA_GRID, folds: int = 3, groups=None, seed: int = 0,
                tol: float = 1e-3, return_scores: bool = False):
    """Exhaustive (C, gamma) search by inner stratified cross-validation.

    Ties go to the smaller C, then the smaller gamma. For the linear kernel
    gamma is irrelevant and the smallest grid value is reported.
    """
    Cs = sorted(set(float(c) for c in Cs))
    gammas = sorted(set(float(g) for g in gammas))
    if not Cs or not gammas:
        raise ValueError("grid must contain at least one C and one gamma")
    if spec.kind == "linear":
        gammas = gammas[:1]
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    lo, rng = fit_scaling(X)
    Xs = (X - lo) / rng
    val_folds = stratified_folds(y, folds, seed, groups)
    all_idx = np.arange(len(y))
    scores = {}
    for gamma in gammas:
        kspec = spec.with_gamma(gamma)
        K = kernel_matrix(kspec, Xs, Xs)
        for C in Cs:
            accs = []
            for val in val_folds:
                tr = np.setdiff1d(all_idx, val)
                correct = _fold_accuracy(K, Xs, y, tr, val, C, kspec, tol)
                accs.append(correct)
            scores[(C, gamma)] = float(np.mean(accs))
    best = None
    for C in Cs:
        for gamma in gammas:
            if best is None or scores[(C, gamma)] > scores[best]:
                best = (C, gamma)
    if return_scores:
        return best[0], best[1], scores
    return best


def _fold_accuracy(K, Xs, y, tr, val, C, spec, tol) -> float:
    n_classes = int(y.max()) + 1
    decisions = {}
    for a, b in itertools.combinations(range(n_classes), 2):
        idx, yy = _pair_labels(y[tr], a, b)
        gidx = tr[idx]
        sol = solve_dual(_KernelRows(Xs[gidx], spec, K[np.ix_(gidx, gidx)]), yy, C, tol)
        sv = sol.alpha > 0
        coef = sol.alpha[sv] * yy[sv]
        decisions[(a, b)] = K[np.ix_(val, gidx[sv])] @ coef + sol.b
    votes, strength = _votes(decisions, len(val), n_classes)
    return float(np.mean(_decide(votes, strength) == y[val]))


# -- persistence -----------------------------------------------------------

MAGIC = b"ASVM"
VERSION = 1


def encode(model: SvmModel) -> bytes:
    any_machine = next(iter(model.machines.values()))
    spec, C = any_machine.kernel, any_machine.C
    dim = len(model.scale_min)
    parts = [container.u32(KERNELS.index(spec.kind)), container.u32(spec.degree),
             container.f64(spec.gamma), container.f64(spec.coef0), container.f64(C),
             container.u32(len(model.classes)), container.u32(dim),
             container.f64_array(model.scale_min), container.f64_array(model.scale_range),
             container.u32(len(model.machines))]
    for (a, b), m in sorted(model.machines.items()):
        parts += [container.u32(a), container.u32(b), container.f64(m.b),
                  container.u32(len(m.alpha)), container.f64_array(m.alpha),
                  container.f64_array(m.y), container.f64_array(m.support_vectors)]
    return container.pack(MAGIC, VERSION, b"".join(parts))


def decode(data: bytes) -> SvmModel:
    r = Reader(container.unpack(data, MAGIC, VERSION))
    kind_id, degree = r.u32(), r.u32()
    gamma, coef0, C = r.f64(), r.f64(), r.f64()
    if kind_id >= len(KERNELS):
        raise ModelFormatError(f"unknown kernel id {kind_id}")
    spec = KernelSpec(KERNELS[kind_id], gamma, degree, coef0)
    n_classes, dim = r.u32(), r.u32()
    model = SvmModel(tuple(range(n_classes)), r.f64_array(dim), r.f64_array(dim))
    for _ in range(r.u32()):
        a, b = r.u32(), r.u32()
        off = r.f64()
        n_sv = r.u32()
        alpha, yy = r.f64_array(n_sv), r.f64_array(n_sv)
        sv = r.f64_array(n_sv * dim).reshape(n_sv, dim)
        model.machines[(a, b)] = BinarySvm(sv, alpha, yy, off, spec, C)
    r.done()
    return model


def save_model(model: SvmModel, path: Path) -> None:
    Path(path).write_bytes(encode(model))


def load_model(path: Path) -> SvmModel:
    return decode(Path(path).read_bytes())
