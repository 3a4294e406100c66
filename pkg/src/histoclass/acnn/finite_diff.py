"""Central finite-difference verification of backprop."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import (ForwardCache, Network, Topology, backprop, forward, init_network,
                      make_target)

SMALL_TOPOLOGY = Topology(neurons=(3, 8, 8, 16, 4), cnn_layers=2, kernel_size=3,
                          subsample=2, input_size=16)


@dataclass
class GradcheckResult:
    max_rel_error: float
    worst_parameter: str
    n_checked: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def relative_error(analytic, numeric, floor: float = 1e-8):
    return np.abs(analytic - numeric) / (np.abs(numeric) + floor)


def _error_difference(y_plus, y_minus, target) -> float:
    # (y+ - t)^2 - (y- - t)^2 factored to avoid cancelling two O(1) errors
    return float(np.dot(y_plus - y_minus, y_plus + y_minus - 2.0 * target))


def numeric_gradient(net: Network, planes, target, h: float = 1e-4):
    """Central differences of the patch error for every parameter."""
    target = np.asarray(target, dtype=float)
    grads = []
    for arr in net.weights + net.biases:
        g = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            y_plus = forward(net, planes).copy()
            flat[idx] = orig - h
            y_minus = forward(net, planes).copy()
            flat[idx] = orig
            gflat[idx] = _error_difference(y_plus, y_minus, target) / (2 * h)
        grads.append(g)
    n = len(net.weights)
    return grads[:n], grads[n:]


def gradcheck(topology: Topology = SMALL_TOPOLOGY, seed: int = 0, h: float = 1e-4,
              tolerance: float = 1e-5, perturb: float = 0.0) -> GradcheckResult:
    """Compare backprop against central differences on a random net and input.

    ``perturb`` adds a constant to one analytic gradient entry; it exists so
    the failure path can be exercised.
    """
    rng = np.random.default_rng(seed)
    net = init_network(topology, rng, dtype=np.float64)
    size = topology.input_size
    planes = rng.uniform(-1, 1, size=(topology.neurons[0], size, size))
    target = make_target(int(rng.integers(topology.n_classes)), topology)

    cache = ForwardCache()
    forward(net, planes, cache)
    g = backprop(net, cache, target)
    if perturb:
        g.weights[0].reshape(-1)[0] += perturb
    nw, nb = numeric_gradient(net, planes, target, h)

    worst, name, count = 0.0, "", 0
    for label, analytic, numeric in (("w", g.weights, nw), ("b", g.biases, nb)):
        for j, (a, n) in enumerate(zip(analytic, numeric)):
            rel = relative_error(a, n)
            count += rel.size
            i = int(np.argmax(rel))
            if rel.flat[i] > worst:
                worst = float(rel.flat[i])
                name = f"{label}{j}[{np.unravel_index(i, rel.shape)}]"
    return GradcheckResult(worst, name, count, tolerance)
