"""ACNN model files.

Payload after the container header:

    u32 cnn_layers, u32 n_layers, u32 neurons[n_layers],
    u32 kernel_size, u32 subsample_x, u32 subsample_y, u32 input_size,
    u32 activation id (0 tanh, 1 sigmoid), u32 pooling id (0 average, 1 max),
    then for each connection layer j: kernels as f64 in
    (destination neuron, source neuron, row, col) order, followed by the
    destination biases.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .. import container
from ..container import ModelFormatError, Reader
from .network import ACTIVATIONS, POOLINGS, Network, Topology

MAGIC = b"ACNN"
VERSION = 1


def encode(net: Network) -> bytes:
    t = net.topology
    parts = [container.u32(t.cnn_layers), container.u32(len(t.neurons))]
    parts += [container.u32(n) for n in t.neurons]
    parts += [container.u32(v) for v in (t.kernel_size, t.subsample, t.subsample, t.input_size,
                                         ACTIVATIONS.index(t.activation),
                                         POOLINGS.index(t.pooling))]
    for w, b in zip(net.weights, net.biases):
        parts.append(container.f64_array(w))
        parts.append(container.f64_array(b))
    return container.pack(MAGIC, VERSION, b"".join(parts))


def decode(data: bytes) -> Network:
    r = Reader(container.unpack(data, MAGIC, VERSION))
    cnn_layers = r.u32()
    n_layers = r.u32()
    neurons = tuple(r.u32() for _ in range(n_layers))
    kernel, ssx, ssy, input_size, act_id, pool_id = (r.u32() for _ in range(6))
    if ssx != ssy:
        raise ModelFormatError("non-square subsampling is not supported")
    if act_id >= len(ACTIVATIONS) or pool_id >= len(POOLINGS):
        raise ModelFormatError("unknown activation or pooling id")
    try:
        topo = Topology(neurons, cnn_layers, kernel, ssx, input_size,
                        ACTIVATIONS[act_id], POOLINGS[pool_id])
    except ValueError as exc:
        raise ModelFormatError(f"invalid topology block: {exc}") from exc
    weights, biases = [], []
    for shape in topo.weight_shapes():
        weights.append(r.f64_array(int(np.prod(shape))).reshape(shape))
        biases.append(r.f64_array(shape[0]))
    r.done()
    return Network(topo, weights, biases)


def save_model(net: Network, path: Path) -> None:
    Path(path).write_bytes(encode(net.astype(np.float64)))


def load_model(path: Path) -> Network:
    return decode(Path(path).read_bytes())
