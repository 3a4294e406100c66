import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from histoclass.acnn import finite_diff as gc
from histoclass.acnn import network as nw
from histoclass.acnn import ops


def per_neuron_forward(net, planes):
    """Neuron-by-neuron forward pass built from the scalar conv primitives."""
    t = net.topology
    f = lambda v: nw.activate(v, t.activation)  # noqa: E731
    factors = t.pool_factors()
    s = [planes[i] for i in range(planes.shape[0])]
    xs, ys, ss = [], [], []
    for l in range(t.cnn_layers):
        w, b = net.weights[l], net.biases[l]
        x = [b[k] + sum(ops.conv2d_valid(s[i], w[k, i]) for i in range(len(s)))
             for k in range(w.shape[0])]
        y = [f(v) for v in x]
        pool = ops.avg_pool if t.pooling == "average" else (lambda a, p, q: ops.max_pool(a, p, q)[0])
        s = [pool(v, factors[l], factors[l]) for v in y]
        xs.append(x); ys.append(y); ss.append(s)
    v = np.array([m.item() for m in s])
    for j in range(t.cnn_layers, len(net.weights)):
        v = f(net.weights[j] @ v + net.biases[j])
    return v, xs, ys, ss


def per_neuron_backprop_cnn(net, cache, grads):
    """Re-derive CNN-layer quantities from the MLP boundary using the neuron-level rules."""
    t = net.topology
    k = t.kernel_size
    out = []
    for l in range(t.cnn_layers - 1, 0, -1):
        d_next = grads.deltas[l]
        w = net.weights[l]
        n_out, n_in = w.shape[:2]
        ds = [sum(ops.conv2d_full(d_next[o], ops.rot180(w[o, i])) for o in range(n_out))
              for i in range(n_in)]
        out.append((l - 1, np.array(ds)))
    return out


def random_setup(topology, seed):
    rng = np.random.default_rng(seed)
    net = nw.init_network(topology, rng)
    planes = rng.uniform(-1, 1, (topology.neurons[0], topology.input_size, topology.input_size))
    target = nw.make_target(int(rng.integers(topology.n_classes)), topology)
    return net, planes, target


def test_default_map_sizes():
    t = nw.Topology()
    assert t.map_sizes() == [(60, 30), (26, 13), (9, 1)]
    assert t.pool_factors() == [2, 2, 9]
    assert t.mlp_layers == 2
    assert len(t.neurons) == t.cnn_layers + t.mlp_layers + 1


def test_forward_shapes_default():
    net, planes, _ = random_setup(nw.Topology(), 0)
    cache = nw.ForwardCache()
    out = nw.forward(net, planes, cache)
    assert out.shape == (4,)
    assert [y.shape[1:] for y in cache.y[:3]] == [(60, 60), (26, 26), (9, 9)]
    assert [s.shape[1:] for s in cache.s[:2]] == [(30, 30), (13, 13)]
    assert cache.s[2].shape == (32,)


@pytest.mark.parametrize("topology", [
    gc.SMALL_TOPOLOGY,
    nw.Topology((3, 4, 5, 3), 2, 3, 2, 17, "sigmoid", "max"),
    nw.Topology((2, 3, 6, 4), 1, 4, 2, 9, "tanh", "average"),
])
def test_forward_matches_per_neuron(topology):
    net, planes, _ = random_setup(topology, 3)
    cache = nw.ForwardCache()
    out = nw.forward(net, planes, cache)
    ref, xs, ys, _ = per_neuron_forward(net, planes)
    np.testing.assert_allclose(out, ref, atol=1e-12)
    for l in range(topology.cnn_layers):
        np.testing.assert_allclose(cache.x[l], np.array(xs[l]), atol=1e-12)


def test_zero_parameters_give_zero_output():
    t = nw.Topology()
    net = nw.init_network(t, np.random.default_rng(0))
    net = nw.Network(t, [np.zeros_like(w) for w in net.weights], [np.zeros_like(b) for b in net.biases])
    out = nw.forward(net, np.random.default_rng(1).uniform(-1, 1, (3, 64, 64)))
    np.testing.assert_array_equal(out, np.zeros(4))


def test_constant_bias_layer():
    t = nw.Topology((3, 2, 4), 1, 3, 2, 8)
    net = nw.init_network(t, np.random.default_rng(0))
    net.weights[0][:] = 0
    net.biases[0][:] = 0.3
    cache = nw.ForwardCache()
    nw.forward(net, np.ones((3, 8, 8)), cache)
    np.testing.assert_array_equal(cache.x[0], np.full((2, 6, 6), 0.3))
    np.testing.assert_allclose(cache.s[0], np.full(2, np.tanh(0.3)), atol=1e-15)


def test_forward_rejects_bad_shape():
    net, _, _ = random_setup(gc.SMALL_TOPOLOGY, 0)
    with pytest.raises(nw.TopologyError):
        nw.forward(net, np.zeros((3, 15, 15)))


def test_topology_rejects_small_input():
    with pytest.raises(nw.TopologyError):
        nw.Topology(input_size=8)


def test_inter_layer_delta_matches_full_conv():
    net, planes, target = random_setup(gc.SMALL_TOPOLOGY, 4)
    cache = nw.ForwardCache()
    nw.forward(net, planes, cache)
    g = nw.backprop(net, cache, target)
    for l, ds in per_neuron_backprop_cnn(net, cache, g):
        np.testing.assert_allclose(g.delta_s[l], ds, atol=1e-12)


def test_avg_pool_delta_mass_is_preserved():
    net, planes, target = random_setup(gc.SMALL_TOPOLOGY, 5)
    cache = nw.ForwardCache()
    nw.forward(net, planes, cache)
    g = nw.backprop(net, cache, target)
    # dividing Delta by f' recovers the upsampled map; each block sums back to its Delta-s
    up = g.deltas[0] / nw.activation_derivative(cache.y[0], "tanh")
    ho = g.delta_s[0].shape[1]
    blocks = up[:, :2 * ho, :2 * ho].reshape(up.shape[0], ho, 2, ho, 2).sum(axis=(2, 4))
    np.testing.assert_allclose(blocks, g.delta_s[0], atol=1e-12)


def test_zero_error_gives_zero_gradients():
    net, planes, _ = random_setup(gc.SMALL_TOPOLOGY, 6)
    cache = nw.ForwardCache()
    out = nw.forward(net, planes, cache).copy()
    g = nw.backprop(net, cache, out)
    assert g.error == 0.0
    for a in g.weights + g.biases:
        assert not a.any()


def test_single_weight_chain_rule():
    # 1 input plane 1x1, kernel 1: x1 = b0 + w0*p, s1 = tanh(x1); y = tanh(w1*s1 + b1)
    t = nw.Topology((1, 1, 1), 1, 1, 1, 1)
    net = nw.Network(t, [np.array([[[[0.7]]]]), np.array([[-1.3]])], [np.array([0.2]), np.array([0.1])])
    p, tgt = 0.4, np.array([0.5])
    cache = nw.ForwardCache()
    nw.forward(net, np.array([[[p]]]), cache)
    g = nw.backprop(net, cache, tgt)
    s1 = np.tanh(0.2 + 0.7 * p)
    y = np.tanh(-1.3 * s1 + 0.1)
    dy = 2 * (y - 0.5) * (1 - y * y)
    assert g.weights[1][0, 0] == pytest.approx(dy * s1, abs=1e-12)
    assert g.biases[1][0] == pytest.approx(dy, abs=1e-12)
    dx1 = dy * -1.3 * (1 - s1 * s1)
    assert g.weights[0].item() == pytest.approx(dx1 * p, abs=1e-12)
    assert g.biases[0][0] == pytest.approx(dx1, abs=1e-12)


@pytest.mark.parametrize("topology", [
    gc.SMALL_TOPOLOGY,
    nw.Topology((3, 4, 5, 3), 2, 3, 2, 17, "tanh", "max"),
    nw.Topology((2, 3, 4), 1, 3, 2, 7, "sigmoid", "average"),
    nw.Topology((1, 2, 2, 3, 2), 3, 2, 2, 12, "tanh", "average"),
])
def test_gradcheck_variants(topology):
    res = gc.gradcheck(topology, seed=1)
    assert res.passed, res


def test_gradcheck_negative_control():
    assert not gc.gradcheck(seed=0, perturb=1e-3).passed


def test_update_rules():
    net, planes, target = random_setup(gc.SMALL_TOPOLOGY, 7)
    cache = nw.ForwardCache()
    nw.forward(net, planes, cache)
    g = nw.backprop(net, cache, target)
    same = nw.update(net, g, 0.0)
    for a, b in zip(same.weights + same.biases, net.weights + net.biases):
        np.testing.assert_array_equal(a, b)
    zero = nw.GradientSet([np.zeros_like(w) for w in g.weights],
                          [np.zeros_like(b) for b in g.biases], [], [])
    for a, b in zip(nw.update(net, zero, 0.5).weights, net.weights):
        np.testing.assert_array_equal(a, b)
    two = nw.update(net, g, 2e-3)
    twice = nw.update(nw.update(net, g, 1e-3), g, 1e-3)
    for a, b in zip(two.weights + two.biases, twice.weights + twice.biases):
        np.testing.assert_allclose(a, b, atol=1e-12, rtol=0)


def test_small_step_decreases_error():
    net, planes, target = random_setup(gc.SMALL_TOPOLOGY, 8)
    cache = nw.ForwardCache()
    e0 = nw.mse_error(nw.forward(net, planes, cache), target)
    g = nw.backprop(net, cache, target)
    e1 = nw.mse_error(nw.forward(nw.update(net, g, 1e-3), planes), target)
    assert e1 < e0


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=4, max_size=4), st.integers(0, 3))
def test_error_non_negative_and_zero_iff_equal(y, label):
    t = nw.make_target(label, nw.Topology())
    y = np.array(y)
    e = nw.mse_error(y, t)
    assert e >= 0
    assert (e == 0) == np.array_equal(y, t)


def test_targets():
    t = nw.make_target(2, nw.Topology())
    np.testing.assert_array_equal(t, [-0.95, -0.95, 0.95, -0.95])
    s = nw.make_target(0, nw.Topology(activation="sigmoid"))
    np.testing.assert_array_equal(s, [0.95, 0.05, 0.05, 0.05])


def test_predict_batch_matches_single():
    net, planes, _ = random_setup(gc.SMALL_TOPOLOGY, 9)
    batch = np.stack([planes, -planes])
    out = nw.predict(net, batch)
    np.testing.assert_allclose(out[1], nw.predict(net, -planes))
    assert ((out >= 0) & (out <= 1)).all()
