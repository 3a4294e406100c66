"""Adaptive compact CNN: topology, forward propagation and backpropagation.

Hidden CNN neurons fuse convolution and subsampling: the input map ``x`` is
the bias plus the valid correlation of every previous-layer output ``s`` with
its own kernel, ``y = f(x)``, and ``s = pool(y)``. The last CNN layer pools
its whole map, so its outputs are scalars feeding ordinary MLP layers.

Weights are stored destination-major: ``weights[j][k, i]`` is the kernel (or
scalar) from neuron ``i`` of layer ``j`` to neuron ``k`` of layer ``j + 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops

ACTIVATIONS = ("tanh", "sigmoid")
POOLINGS = ("average", "max")

# one-hot target levels per activation: (on, off)
TARGET_LEVELS = {"tanh": (0.95, -0.95), "sigmoid": (0.95, 0.05)}


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class Topology:
    neurons: tuple = (3, 16, 16, 32, 64, 4)
    cnn_layers: int = 3
    kernel_size: int = 5
    subsample: int = 2
    input_size: int = 64
    activation: str = "tanh"
    pooling: str = "average"

    def __post_init__(self):
        object.__setattr__(self, "neurons", tuple(int(n) for n in self.neurons))
        if self.activation not in ACTIVATIONS:
            raise TopologyError(f"activation must be one of {ACTIVATIONS}")
        if self.pooling not in POOLINGS:
            raise TopologyError(f"pooling must be one of {POOLINGS}")
        if self.cnn_layers < 1 or self.mlp_layers < 1:
            raise TopologyError("need at least one CNN layer and one MLP layer")
        if min(self.neurons) < 1 or self.kernel_size < 1 or self.subsample < 1:
            raise TopologyError("counts, kernel size and subsample factor must be positive")
        self.map_sizes()  # validates geometry

    @property
    def mlp_layers(self) -> int:
        return len(self.neurons) - 1 - self.cnn_layers

    @property
    def n_classes(self) -> int:
        return self.neurons[-1]

    def pool_factors(self) -> list[int]:
        """Subsample factor of each CNN layer; the last equals its map size."""
        sizes = self.map_sizes()
        return [self.subsample] * (self.cnn_layers - 1) + [sizes[-1][0]]

    def map_sizes(self) -> list[tuple[int, int]]:
        """(x map size, s map size) per CNN layer, e.g. 60/30, 26/13, 9/1."""
        out = []
        size = self.input_size
        for l in range(self.cnn_layers):
            xs = size - self.kernel_size + 1
            if xs < 1:
                raise TopologyError(
                    f"CNN layer {l + 1}: input map {size} smaller than kernel {self.kernel_size}")
            if l == self.cnn_layers - 1:
                ss = 1
            else:
                ss = xs // self.subsample
                if ss < 1:
                    raise TopologyError(f"CNN layer {l + 1}: map {xs} smaller than subsample factor")
            out.append((xs, ss))
            size = ss
        return out

    def weight_shapes(self) -> list[tuple[int, ...]]:
        k = self.kernel_size
        shapes = []
        for j in range(len(self.neurons) - 1):
            n_in, n_out = self.neurons[j], self.neurons[j + 1]
            shapes.append((n_out, n_in, k, k) if j < self.cnn_layers else (n_out, n_in))
        return shapes


@dataclass
class Network:
    topology: Topology
    weights: list
    biases: list

    @property
    def dtype(self):
        return self.weights[0].dtype

    def copy(self) -> "Network":
        return Network(self.topology, [w.copy() for w in self.weights],
                       [b.copy() for b in self.biases])

    def astype(self, dtype) -> "Network":
        return Network(self.topology, [w.astype(dtype) for w in self.weights],
                       [b.astype(dtype) for b in self.biases])

    def parameters(self):
        """Yield (name, array) in file traversal order."""
        for j, (w, b) in enumerate(zip(self.weights, self.biases)):
            yield f"w{j}", w
            yield f"b{j}", b

    def n_parameters(self) -> int:
        return sum(a.size for _, a in self.parameters())


def init_network(topology: Topology, rng: np.random.Generator, scale: float = 0.1,
                 dtype=np.float64) -> Network:
    """Uniform U(-scale, scale) initialisation in file traversal order."""
    weights, biases = [], []
    for shape in topology.weight_shapes():
        weights.append(rng.uniform(-scale, scale, size=shape).astype(dtype))
        biases.append(rng.uniform(-scale, scale, size=shape[0]).astype(dtype))
    return Network(topology, weights, biases)


def activate(x, kind: str):
    if kind == "tanh":
        return np.tanh(x)
    return 1.0 / (1.0 + np.exp(-x))


def activation_derivative(y, kind: str):
    """f'(x) expressed through y = f(x)."""
    if kind == "tanh":
        return 1.0 - y * y
    return y * (1.0 - y)


def make_target(label: int, topology: Topology, dtype=np.float64) -> np.ndarray:
    on, off = TARGET_LEVELS[topology.activation]
    t = np.full(topology.n_classes, off, dtype=dtype)
    t[int(label)] = on
    return t


def output_to_scores(y: np.ndarray, activation: str) -> np.ndarray:
    """Affinely map output activations to [0, 1] per-class scores."""
    if activation == "tanh":
        return (np.asarray(y) + 1.0) / 2.0
    return np.asarray(y)


@dataclass
class ForwardCache:
    """Per-layer x, y, s plus what backprop needs (patch matrices, argmax)."""
    x: list = field(default_factory=list)
    y: list = field(default_factory=list)
    s: list = field(default_factory=list)
    cols: list = field(default_factory=list)
    argmax: list = field(default_factory=list)

    @property
    def output(self) -> np.ndarray:
        return self.y[-1]


@dataclass
class GradientSet:
    weights: list
    biases: list
    deltas: list          # dE/dx per non-input layer
    delta_s: list         # dE/ds per non-input layer
    error: float = 0.0


def forward(net: Network, planes: np.ndarray, cache: ForwardCache | None = None) -> np.ndarray:
    """Propagate one input (C, H, W) and return the output-layer activations."""
    topo = net.topology
    planes = np.asarray(planes, dtype=net.dtype)
    if planes.shape != (topo.neurons[0], topo.input_size, topo.input_size):
        raise TopologyError(
            f"input shape {planes.shape} does not match topology "
            f"({topo.neurons[0]}, {topo.input_size}, {topo.input_size})")
    if cache is None:
        cache = ForwardCache()
    cache.x.clear(); cache.y.clear(); cache.s.clear()
    cache.cols.clear(); cache.argmax.clear()

    k = topo.kernel_size
    factors = topo.pool_factors()
    s = planes
    for l in range(topo.cnn_layers):
        w, b = net.weights[l], net.biases[l]
        cols = ops.im2col(s, k)
        ho = s.shape[1] - k + 1
        x = (w.reshape(w.shape[0], -1) @ cols).reshape(w.shape[0], ho, ho)
        x += b[:, None, None]
        y = activate(x, topo.activation)
        ss = factors[l]
        if topo.pooling == "average":
            s_next, idx = ops.avg_pool(y, ss, ss), None
        else:
            s_next, idx = ops.max_pool_local(y, ss, ss)
        cache.cols.append(cols)
        cache.x.append(x); cache.y.append(y); cache.s.append(s_next); cache.argmax.append(idx)
        s = s_next
    s = s.reshape(s.shape[0])
    cache.s[-1] = s
    for j in range(topo.cnn_layers, len(net.weights)):
        x = net.weights[j] @ s + net.biases[j]
        y = activate(x, topo.activation)
        cache.cols.append(None); cache.argmax.append(None)
        cache.x.append(x); cache.y.append(y); cache.s.append(y)
        s = y
    return cache.y[-1]


def mse_error(output: np.ndarray, target: np.ndarray) -> float:
    """Sum of squared output errors for one patch."""
    d = np.asarray(output, dtype=float) - np.asarray(target, dtype=float)
    return float(d @ d)


def backprop(net: Network, cache: ForwardCache, target: np.ndarray) -> GradientSet:
    topo = net.topology
    n_layers = len(net.weights)
    if len(cache.y) != n_layers:
        raise TopologyError("forward cache does not belong to this network")
    target = np.asarray(target, dtype=net.dtype)
    if target.shape != cache.y[-1].shape:
        raise TopologyError(f"target shape {target.shape} != output shape {cache.y[-1].shape}")
    act = topo.activation
    k = topo.kernel_size
    factors = topo.pool_factors()

    gw = [None] * n_layers
    gb = [None] * n_layers
    deltas = [None] * n_layers
    delta_s = [None] * n_layers

    err = cache.y[-1] - target
    ds = 2.0 * err
    for j in range(n_layers - 1, topo.cnn_layers - 1, -1):
        delta_s[j] = ds
        d = ds * activation_derivative(cache.y[j], act)
        deltas[j] = d
        s_prev = cache.s[j - 1]
        gw[j] = np.outer(d, s_prev)
        gb[j] = d
        ds = net.weights[j].T @ d

    for l in range(topo.cnn_layers - 1, -1, -1):
        y = cache.y[l]
        ss = factors[l]
        ds_map = ds.reshape(cache.s[l].shape[0], 1, 1) if l == topo.cnn_layers - 1 else ds
        delta_s[l] = ds_map
        if topo.pooling == "average":
            up = ops.avg_pool_backward(ds_map, y.shape, ss, ss)
        else:
            up = ops.max_pool_backward(ds_map, cache.argmax[l], y.shape, ss, ss)
        d = up * activation_derivative(y, act)
        deltas[l] = d
        d2 = d.reshape(d.shape[0], -1)
        w = net.weights[l]
        gw[l] = (d2 @ cache.cols[l].T).reshape(w.shape)
        gb[l] = d2.sum(axis=1)
        if l > 0:
            n_out, n_in = w.shape[:2]
            padded = np.pad(d, ((0, 0), (k - 1, k - 1), (k - 1, k - 1)))
            pcols = ops.im2col(padded, k)
            wr = ops.rot180(w).transpose(1, 0, 2, 3).reshape(n_in, -1)
            side = padded.shape[1] - k + 1
            ds = (wr @ pcols).reshape(n_in, side, side)
    return GradientSet(gw, gb, deltas, delta_s, float(err @ err))


def update(net: Network, grads: GradientSet, eps: float) -> Network:
    """Gradient step returning a new network."""
    return Network(net.topology,
                   [w - eps * g for w, g in zip(net.weights, grads.weights)],
                   [b - eps * g for b, g in zip(net.biases, grads.biases)])


def update_inplace(net: Network, grads: GradientSet, eps: float) -> None:
    for w, g in zip(net.weights, grads.weights):
        w -= eps * g
    for b, g in zip(net.biases, grads.biases):
        b -= eps * g


def predict(net: Network, planes: np.ndarray) -> np.ndarray:
    """Per-class scores in [0, 1] for one input or a batch (N, C, H, W)."""
    planes = np.asarray(planes)
    act = net.topology.activation
    if planes.ndim == 3:
        return output_to_scores(forward(net, planes), act)
    cache = ForwardCache()
    return np.stack([output_to_scores(forward(net, p, cache), act) for p in planes])
