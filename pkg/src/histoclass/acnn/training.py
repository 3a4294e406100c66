"""Stochastic BP training with the global learning-factor adaptation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .network import (ForwardCache, Network, Topology, backprop, forward, init_network,
                      make_target, update_inplace)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 1e-3
    lr_increase: float = 1.05
    lr_decrease: float = 0.70
    max_iterations: int = 50
    min_train_error: float = 0.08
    init_scale: float = 0.1
    seed: int = 0
    # float32 halves the cost of the per-patch loop; parameters are returned as float64
    dtype: str = "float32"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class IterationRecord:
    iteration: int
    learning_rate: float
    mse: float
    train_error: float


@dataclass
class TrainingLog:
    records: list = field(default_factory=list)
    stop_reason: str = ""

    @property
    def mse(self) -> list[float]:
        return [r.mse for r in self.records]

    @property
    def learning_rates(self) -> list[float]:
        return [r.learning_rate for r in self.records]

    @property
    def train_errors(self) -> list[float]:
        return [r.train_error for r in self.records]

    def to_dict(self) -> dict:
        return {
            "stop_reason": self.stop_reason,
            "iterations": [vars(r) for r in self.records],
        }


def next_learning_rate(eps: float, mse: float, prev_mse: float | None,
                       cfg: TrainingConfig) -> float:
    if prev_mse is None:
        return eps
    return eps * (cfg.lr_increase if mse < prev_mse else cfg.lr_decrease)


def train(topology: Topology, inputs: np.ndarray, labels, cfg: TrainingConfig = TrainingConfig(),
          callback=None) -> tuple[Network, TrainingLog]:
    """Train a freshly initialised network.

    Each iteration visits every patch once in a per-iteration shuffled order,
    running forward, backprop and an immediate parameter update. The iteration
    MSE and classification error are accumulated from those same forward
    passes. Training stops after ``max_iterations`` or once the train error
    is at or below ``min_train_error``.
    """
    inputs = np.asarray(inputs)
    labels = np.asarray(labels, dtype=int)
    n = len(inputs)
    if n == 0:
        raise ValueError("training set is empty")
    if len(labels) != n:
        raise ValueError("inputs and labels differ in length")

    dtype = np.dtype(cfg.dtype)
    rng = np.random.default_rng(cfg.seed)
    net = init_network(topology, rng, cfg.init_scale, dtype=np.float64).astype(dtype)
    targets = np.stack([make_target(c, topology, dtype) for c in range(topology.n_classes)])
    cache = ForwardCache()
    history = TrainingLog()

    eps = cfg.learning_rate
    prev_mse = None
    for it in range(1, cfg.max_iterations + 1):
        sse = 0.0
        wrong = 0
        for idx in rng.permutation(n):
            out = forward(net, inputs[idx], cache)
            label = labels[idx]
            wrong += int(np.argmax(out)) != label
            grads = backprop(net, cache, targets[label])
            sse += grads.error
            update_inplace(net, grads, eps)
        mse = float(sse / (n * topology.n_classes))
        err = float(wrong / n)
        history.records.append(IterationRecord(it, eps, mse, err))
        log.debug("iter %d eps=%.3g mse=%.5f err=%.3f", it, eps, mse, err)
        if callback is not None:
            callback(history.records[-1])
        if not np.isfinite(mse):
            history.stop_reason = "diverged"
            break
        if err <= cfg.min_train_error:
            history.stop_reason = "min_train_error"
            break
        eps = next_learning_rate(eps, mse, prev_mse, cfg)
        prev_mse = mse
    else:
        history.stop_reason = "max_iterations"
    return net.astype(np.float64), history
