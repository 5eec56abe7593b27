import numpy as np
import pytest

from topotensor.graphs import Graph
from topotensor.nn import (
    AdamState, BatchNorm, CNNEncoder, Dropout, GCNEncoder, GCNLayer, Linear,
    MLPClassifier, accuracy, adam_step, cnn_encode, cross_entropy,
    finite_difference_check, gcn_forward, mlp_classify,
)
from topotensor.tensor import DenseTensor

from helpers import random_connected_graph


def relabel(g, perm):
    inv = {old: new for old, new in enumerate(perm)}
    edges = sorted((min(inv[u], inv[v]), max(inv[u], inv[v]), w)
                   for u, v, w in g.edges)
    feats = np.zeros_like(g.features)
    for old, new in inv.items():
        feats[new] = g.features[old]
    return Graph(num_nodes=g.num_nodes, edges=edges, features=feats, label=g.label)


def test_gcn_isolated_node_identity_setup():
    g = Graph(num_nodes=1, edges=[], features=np.array([[0.7, -0.3]]), label=0)
    enc = GCNEncoder(in_width=2, hidden=2, layers=1, tau=1,
                     rng=np.random.default_rng(0))
    layer = enc.layers[0]
    layer.weight.data = np.eye(2)
    layer.mlp.weight.data = np.eye(2)
    layer.mlp.bias.data = np.zeros(2)
    layer.bn.running_mean = np.zeros(2)
    layer.bn.running_var = np.ones(2) - layer.bn.eps
    out = gcn_forward(g, enc, training=False)[0]
    assert np.allclose(out.data, [[0.7, 0.0]])


def test_gcn_two_node_closed_form():
    g = Graph(num_nodes=2, edges=[(0, 1, 1.0)],
              features=np.array([[1.0], [2.0]]), label=0)
    enc = GCNEncoder(in_width=1, hidden=1, layers=1, tau=1,
                     rng=np.random.default_rng(1))
    layer = enc.layers[0]
    layer.weight.data = np.array([[2.0]])
    layer.mlp.weight.data = np.array([[3.0]])
    layer.mlp.bias.data = np.array([0.5])
    layer.bn.running_var = np.ones(1) - layer.bn.eps
    # A_hat rows are [0.5, 0.5]; A_hat C = [[1.5], [1.5]]; x2, relu, x3 + 0.5
    out = gcn_forward(g, enc, training=False)[0]
    assert np.allclose(out.data, [[9.5], [9.5]])


def test_gcn_three_layer_shapes():
    g = random_connected_graph(np.random.default_rng(2), 6, extra_edges=2,
                               feature_dim=5)
    enc = GCNEncoder(in_width=5, hidden=32, layers=3, tau=2,
                     rng=np.random.default_rng(3))
    outs = gcn_forward(g, enc, training=True, update_running=False)
    assert len(outs) == 3
    assert all(o.shape == (6, 32) for o in outs)
    stacked = np.stack([o.data for o in outs], axis=1)
    assert stacked.shape == (6, 3, 32)


def test_gcn_feature_width_mismatch():
    g = random_connected_graph(np.random.default_rng(4), 5, feature_dim=3)
    enc = GCNEncoder(in_width=7, hidden=4, layers=1, rng=np.random.default_rng(5))
    with pytest.raises(ValueError, match="width"):
        gcn_forward(g, enc)


def test_gcn_rejects_bad_tau():
    with pytest.raises(ValueError, match="tau"):
        GCNEncoder(in_width=3, hidden=4, layers=1, tau=0)


@pytest.mark.parametrize("training", [False, True])
def test_gcn_permutation_equivariance(training):
    rng = np.random.default_rng(6)
    g = random_connected_graph(rng, 7, extra_edges=3, feature_dim=4)
    perm = list(rng.permutation(7))
    g2 = relabel(g, perm)
    enc = GCNEncoder(in_width=4, hidden=8, layers=2, rng=np.random.default_rng(7))
    outs = gcn_forward(g, enc, training=training, update_running=False)
    outs2 = gcn_forward(g2, enc, training=training, update_running=False)
    for a, b in zip(outs, outs2):
        # node i of the original becomes node perm[i] of the relabeled graph
        assert np.allclose(b.data[perm], a.data, atol=1e-10)


def test_shared_weights_affect_both_views():
    rng = np.random.default_rng(8)
    g1 = random_connected_graph(rng, 5, feature_dim=3)
    g2 = random_connected_graph(rng, 6, feature_dim=3)
    enc = GCNEncoder(in_width=3, hidden=4, layers=1, rng=np.random.default_rng(9))
    a1 = gcn_forward(g1, enc)[0].data.copy()
    a2 = gcn_forward(g2, enc)[0].data.copy()
    enc.layers[0].weight.data = enc.layers[0].weight.data + 0.5
    b1 = gcn_forward(g1, enc)[0].data
    b2 = gcn_forward(g2, enc)[0].data
    assert not np.allclose(a1, b1) and not np.allclose(a2, b2)


def test_batchnorm_train_normalizes_and_tracks():
    rng = np.random.default_rng(10)
    bn = BatchNorm(3)
    x = DenseTensor(rng.normal(5.0, 2.0, (40, 3)))
    out = bn.forward(x, training=True)
    assert np.allclose(out.data.mean(axis=0), 0.0, atol=1e-12)
    assert np.allclose(out.data.std(axis=0), 1.0, atol=1e-3)
    assert not np.allclose(bn.running_mean, 0.0)
    expected_rm = 0.1 * x.data.mean(axis=0)
    assert np.allclose(bn.running_mean, expected_rm)


def test_batchnorm_update_running_flag():
    bn = BatchNorm(2)
    x = DenseTensor(np.random.default_rng(11).normal(3.0, 1.0, (10, 2)))
    bn.forward(x, training=True, update_running=False)
    assert np.allclose(bn.running_mean, 0.0)
    assert np.allclose(bn.running_var, 1.0)


def test_batchnorm_inference_is_affine_deterministic():
    bn = BatchNorm(2)
    bn.running_mean = np.array([1.0, -1.0])
    bn.running_var = np.array([4.0, 0.25])
    bn.gamma.data = np.array([2.0, 3.0])
    bn.beta.data = np.array([0.1, 0.2])
    x = DenseTensor(np.array([[3.0, 0.0]]))
    out = bn.forward(x, training=False)
    inv = 1.0 / np.sqrt(bn.running_var + bn.eps)
    expect = (x.data - bn.running_mean) * inv * bn.gamma.data + bn.beta.data
    assert np.allclose(out.data, expect)
    again = bn.forward(x, training=False)
    assert np.array_equal(out.data, again.data)


def test_dropout_modes():
    rng = np.random.default_rng(12)
    x = DenseTensor(np.ones((200, 10)))
    drop = Dropout(0.5)
    assert drop.forward(x, training=False) is x
    assert Dropout(0.0).forward(x, training=True) is x
    out = drop.forward(x, training=True, rng=np.random.default_rng(0)).data
    assert set(np.unique(out)) == {0.0, 2.0}
    assert abs((out == 0).mean() - 0.5) < 0.05
    a = drop.forward(x, training=True, rng=np.random.default_rng(7)).data
    b = drop.forward(x, training=True, rng=np.random.default_rng(7)).data
    assert np.array_equal(a, b)
    with pytest.raises(ValueError, match="rng or a mask"):
        drop.forward(x, training=True)
    with pytest.raises(ValueError, match="rate"):
        Dropout(1.0)


def test_cnn_zero_input_zero_output():
    enc = CNNEncoder(in_channels=8, images_per_filtration=2,
                     rng=np.random.default_rng(13))
    out = cnn_encode(np.zeros((4, 2, 12, 12)), enc)
    assert out.shape == (32,)
    assert np.allclose(out.data, 0.0)


def test_cnn_identity_kernels_mean_pool():
    enc = CNNEncoder(in_channels=1, images_per_filtration=1, channels=(1, 1),
                     kernel=1, head_width=1, rng=np.random.default_rng(14))
    enc.w1.data = np.ones((1, 1, 1, 1))
    enc.w2.data = np.ones((1, 1, 1, 1))
    img = np.random.default_rng(15).uniform(0, 1, (1, 1, 9, 9))
    out = cnn_encode(img, enc)
    assert np.allclose(out.data, [img.mean()])


@pytest.mark.parametrize("resolution", [10, 30, 50])
def test_cnn_head_width_independent_of_resolution(resolution):
    enc = CNNEncoder(in_channels=8, images_per_filtration=2,
                     rng=np.random.default_rng(16))
    z = np.random.default_rng(17).uniform(0, 1, (4, 2, resolution, resolution))
    assert cnn_encode(z, enc).shape == (32,)


def test_cnn_batched_forward_matches_single():
    enc = CNNEncoder(in_channels=8, images_per_filtration=2,
                     rng=np.random.default_rng(18))
    z = np.random.default_rng(19).uniform(0, 1, (3, 4, 2, 10, 10))
    batched = cnn_encode(z, enc).data
    singles = np.stack([cnn_encode(z[i], enc).data for i in range(3)])
    assert np.allclose(batched, singles, atol=1e-12)


def test_cnn_errors():
    with pytest.raises(ValueError, match="odd"):
        CNNEncoder(in_channels=4, images_per_filtration=2, kernel=2)
    with pytest.raises(ValueError, match="head width"):
        CNNEncoder(in_channels=4, images_per_filtration=1, channels=(8, 16),
                   head_width=32)
    enc = CNNEncoder(in_channels=8, images_per_filtration=2,
                     rng=np.random.default_rng(20))
    with pytest.raises(ValueError, match="resolution"):
        cnn_encode(np.zeros((4, 2, 2, 2)), enc)


def test_mlp_zero_weights_uniform_logits():
    head = MLPClassifier(6, 8, 3, rng=np.random.default_rng(21))
    head.fc1.weight.data = np.zeros_like(head.fc1.weight.data)
    head.fc2.weight.data = np.zeros_like(head.fc2.weight.data)
    logits = mlp_classify(DenseTensor(np.ones((4, 6))), head)
    assert np.allclose(logits.data, logits.data[0, 0])


def test_mlp_inference_deterministic_training_stochastic():
    head = MLPClassifier(5, 16, 2, rng=np.random.default_rng(22))
    x = DenseTensor(np.random.default_rng(23).normal(0, 1, (3, 5)))
    a = mlp_classify(x, head).data
    b = mlp_classify(x, head).data
    assert np.array_equal(a, b)
    t1 = mlp_classify(x, head, training=True, rng=np.random.default_rng(1)).data
    t2 = mlp_classify(x, head, training=True, rng=np.random.default_rng(2)).data
    assert not np.allclose(t1, t2)


def test_cross_entropy_value_and_gradient():
    rng = np.random.default_rng(24)
    logits = DenseTensor(rng.normal(0, 1, (6, 4)), requires_grad=True)
    labels = rng.integers(0, 4, 6)
    loss = cross_entropy(logits, labels)
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    probs = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
    expect = -np.log(probs[np.arange(6), labels]).mean()
    assert np.isclose(loss.item(), expect)
    loss.backward()
    onehot = np.zeros((6, 4))
    onehot[np.arange(6), labels] = 1.0
    assert np.allclose(logits.grad, (probs - onehot) / 6, atol=1e-12)


def test_cross_entropy_label_shape_guard():
    with pytest.raises(ValueError, match="labels"):
        cross_entropy(DenseTensor(np.zeros((3, 2))), np.array([0, 1]))


def test_accuracy():
    logits = np.array([[2.0, 1.0], [0.0, 3.0], [1.0, 0.0]])
    assert accuracy(logits, np.array([0, 1, 1])) == pytest.approx(2 / 3)


def test_adam_zero_grad_no_move():
    p = DenseTensor(np.array([1.0, 2.0]), requires_grad=True)
    params = {"p": p}
    state = AdamState(params)
    adam_step(params, state)
    assert np.array_equal(p.data, [1.0, 2.0])
    assert state.step == 1


def test_adam_first_step_closed_form():
    p = DenseTensor(np.array([1.0]), requires_grad=True)
    p.grad = np.array([0.3])
    state = AdamState({"p": p}, lr=1e-3)
    adam_step({"p": p}, state)
    expect = 1.0 - 1e-3 * 0.3 / (0.3 + 1e-8)
    assert np.allclose(p.data, expect, rtol=1e-9)


def test_adam_groups_independent():
    a = DenseTensor(np.array([1.0]), requires_grad=True)
    b = DenseTensor(np.array([1.0]), requires_grad=True)
    a.grad = np.array([1.0])
    b.grad = None
    params = {"a": a, "b": b}
    state = AdamState(params)
    adam_step(params, state)
    assert not np.allclose(a.data, 1.0)
    assert np.allclose(b.data, 1.0)


def test_linear_width_guard():
    lin = Linear(3, 2, np.random.default_rng(25), name="lin")
    with pytest.raises(ValueError, match="width"):
        lin.forward(DenseTensor(np.ones((2, 4))))


# -- gradient checks ----------------------------------------------------------

def test_gcn_layer_gradients():
    rng = np.random.default_rng(26)
    g = random_connected_graph(rng, 5, extra_edges=2, feature_dim=3)
    enc = GCNEncoder(in_width=3, hidden=4, layers=2, rng=np.random.default_rng(27))
    params = dict(enc.named_params())

    def fn():
        outs = gcn_forward(g, enc, training=True, update_running=False)
        return (outs[-1] ** 2).sum()

    err = finite_difference_check(fn, list(params.values()), rng=rng)
    assert err < 1e-4


def test_cnn_encoder_gradients():
    rng = np.random.default_rng(28)
    enc = CNNEncoder(in_channels=2, images_per_filtration=2, channels=(3, 4),
                     head_width=5, rng=np.random.default_rng(29))
    z = DenseTensor(rng.uniform(0.1, 1.0, (2, 1, 2, 6, 6)), requires_grad=True)
    params = [p for _, p in enc.named_params()] + [z]

    def fn():
        return (cnn_encode(z, enc) ** 2).sum()

    assert finite_difference_check(fn, params, rng=rng) < 1e-4


def test_mlp_gradients_with_fixed_mask():
    rng = np.random.default_rng(30)
    head = MLPClassifier(4, 6, 3, rng=np.random.default_rng(31))
    x = DenseTensor(rng.normal(0, 1, (5, 4)), requires_grad=True)
    mask = (np.random.default_rng(32).random((5, 6)) >= 0.5) / 0.5
    labels = np.array([0, 1, 2, 0, 1])
    params = [p for _, p in head.named_params()] + [x]

    def fn():
        logits = mlp_classify(x, head, training=True, dropout_mask=mask)
        return cross_entropy(logits, labels)

    assert finite_difference_check(fn, params, rng=rng) < 1e-4


def test_quadratic_finite_difference_is_tight():
    x = DenseTensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)

    def fn():
        return (x * x).sum()

    assert finite_difference_check(fn, [x]) < 1e-8
