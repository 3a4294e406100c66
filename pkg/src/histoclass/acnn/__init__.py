"""Adaptive compact CNN trained from scratch with hand-derived backprop."""
from .finite_diff import SMALL_TOPOLOGY, GradcheckResult, gradcheck
from .io import load_model, save_model
from .network import (ForwardCache, GradientSet, Network, Topology, TopologyError, backprop,
                      forward, init_network, make_target, mse_error, output_to_scores, predict,
                      update)
from .ops import avg_pool, conv2d_full, conv2d_valid, max_pool
from .training import TrainingConfig, TrainingLog, train

__all__ = [
    "SMALL_TOPOLOGY", "GradcheckResult", "gradcheck", "load_model", "save_model",
    "ForwardCache", "GradientSet", "Network", "Topology", "TopologyError", "backprop",
    "forward", "init_network", "make_target", "mse_error", "output_to_scores", "predict",
    "update", "avg_pool", "conv2d_full", "conv2d_valid", "max_pool", "TrainingConfig",
    "TrainingLog", "train",
]
