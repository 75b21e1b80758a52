import math
import struct

import numpy as np
import pytest

from neuroergo.errors import GraphError, ShapeError
from neuroergo.nn import (ELU, BatchNorm2d, Conv2d, Dense, Dropout, GATConv, ParamStore, PlateauScheduler,
                          ReLU, batch_complete_graphs, grad_check, grad_check_layer, load_checkpoint,
                          make_graph_batch, plateau_step, save_checkpoint, sgd_step)
from neuroergo.nn import functional as F

from oracles import conv2d_oracle, gat_oracle

F64 = np.float64


def _store():
    return ParamStore(F64)


# conv -----------------------------------------------------------------------------

def test_conv_matches_loop_oracle():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((1, 2, 5, 5))
    w = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    out, _ = F.conv2d_forward(x, w, b)
    assert out.shape == (1, 3, 3, 3)
    assert np.max(np.abs(out - conv2d_oracle(x, w, b))) < 1e-6


def test_conv_centre_tap_is_strided_sample():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 1, 6, 6))
    w = np.zeros((1, 1, 3, 3))
    w[0, 0, 1, 1] = 1.0
    out, _ = F.conv2d_forward(x, w, np.zeros(1))
    assert np.array_equal(out[:, 0], x[:, 0, ::2, ::2])


def test_conv_table_shape_and_errors():
    x = np.zeros((128, 3, 64, 64), dtype=np.float32)
    w = np.zeros((64, 3, 3, 3), dtype=np.float32)
    out, _ = F.conv2d_forward(x, w, np.zeros(64, dtype=np.float32))
    assert out.shape == (128, 64, 32, 32)
    with pytest.raises(ShapeError):
        F.conv2d_forward(x, np.zeros((64, 4, 3, 3)), np.zeros(64))


# batch norm ----------------------------------------------------------------------------

def test_batchnorm_train_statistics():
    rng = np.random.default_rng(2)
    x = 3 + 2 * rng.standard_normal((8, 4, 5, 5))
    out, _ = F.batchnorm2d_forward(x, np.ones(4), np.zeros(4), np.zeros(4), np.ones(4), train=True)
    assert np.max(np.abs(out.mean(axis=(0, 2, 3)))) < 1e-6
    assert np.max(np.abs(out.var(axis=(0, 2, 3)) - 1)) < 1e-4


def test_batchnorm_identity_on_standard_input():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((16, 2, 8, 8))
    x = (x - x.mean(axis=(0, 2, 3), keepdims=True)) / x.std(axis=(0, 2, 3), keepdims=True)
    out, _ = F.batchnorm2d_forward(x, np.ones(2), np.zeros(2), np.zeros(2), np.ones(2))
    assert np.max(np.abs(out - x)) < 1e-4


def test_batchnorm_eval_converges_to_train():
    rng = np.random.default_rng(4)
    store = _store()
    bn = BatchNorm2d(store, "bn", 3)
    x = 1.5 + 0.7 * rng.standard_normal((6, 3, 4, 4))
    for _ in range(1000):
        tr = bn.forward(x, train=True)
    assert np.max(np.abs(bn.forward(x, train=False) - tr)) < 1e-3


# activations, dense, dropout --------------------------------------------------------------

def test_relu_elu_values():
    out, _ = F.relu_forward(np.array([-1.0, 2.0]))
    assert list(out) == [0.0, 2.0]
    e, _ = F.elu_forward(np.array([0.0, -20.0]))
    assert e[0] == 0 and -1 < e[1] < -0.999
    h = 1e-7
    left = (F.elu_forward(np.array([0.0]))[0] - F.elu_forward(np.array([-h]))[0]) / h
    right = (F.elu_forward(np.array([h]))[0] - F.elu_forward(np.array([0.0]))[0]) / h
    assert abs(left[0] - right[0]) < 1e-6


def test_dense_cases():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((4, 6))
    out, _ = F.dense_forward(x, np.eye(6), np.zeros(6))
    assert np.array_equal(out, x)
    w, b = rng.standard_normal((6, 3)), rng.standard_normal(3)
    ref = np.array([[sum(x[i, k] * w[k, j] for k in range(6)) + b[j] for j in range(3)] for i in range(4)])
    assert np.max(np.abs(F.dense_forward(x, w, b)[0] - ref)) < 1e-6
    out, _ = F.dense_forward(np.zeros((128, 8192), np.float32), np.zeros((8192, 128), np.float32),
                             np.zeros(128, np.float32))
    assert out.shape == (128, 128)


def test_dropout_modes():
    rng = np.random.default_rng(6)
    x = np.ones(100_000)
    assert F.dropout_forward(x, 0.5, train=False)[0] is x
    assert np.array_equal(F.dropout_forward(x, 0.0, train=True, rng=rng)[0], x)
    out, mask = F.dropout_forward(x, 0.5, train=True, rng=rng)
    assert abs(out.mean() - 1) < 0.02
    assert set(np.unique(mask)) <= {0.0, 2.0}


# softmax cross-entropy -----------------------------------------------------------------------

def test_cross_entropy_values():
    loss, _ = F.softmax_cross_entropy(np.zeros((5, 3)), np.array([0, 1, 2, 0, 1]))
    assert loss == pytest.approx(math.log(3), abs=1e-12)
    logits = np.zeros((4, 3))
    labels = np.array([0, 1, 2, 1])
    logits[np.arange(4), labels] = 20 + 20  # margin well above 20
    assert F.softmax_cross_entropy(logits, labels)[0] < 1e-8


def test_cross_entropy_gradient():
    rng = np.random.default_rng(7)
    z = rng.standard_normal((6, 3))
    y = rng.integers(0, 3, 6)
    _, g = F.softmax_cross_entropy(z, y)
    num = np.zeros_like(z)
    for idx in np.ndindex(*z.shape):
        zp, zm = z.copy(), z.copy()
        zp[idx] += 1e-6
        zm[idx] -= 1e-6
        num[idx] = (F.softmax_cross_entropy(zp, y)[0] - F.softmax_cross_entropy(zm, y)[0]) / 2e-6
    assert np.max(np.abs(num - g)) < 1e-5
    assert F.softmax_cross_entropy(z, y)[0] >= 0


# GAT ----------------------------------------------------------------------------------------

def _gat(f_in=3, f_out=8, heads=4, concat=True, seed=0):
    store = _store()
    layer = GATConv(store, "g", f_in, f_out, heads=heads, concat=concat, edge_dim=4,
                    rng=np.random.default_rng(seed))
    return store, layer


def _complete(n, rng):
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    return pairs, make_graph_batch(n, pairs, rng.standard_normal((len(pairs), 4)))


def test_gat_shape_and_attention_sums():
    rng = np.random.default_rng(8)
    store, layer = _gat()
    pairs, g = _complete(8, rng)
    out = layer.forward(rng.standard_normal((8, 3)), g)
    assert out.shape == (8, 32) and layer.out_dim == 32
    sums = np.add.reduceat(layer.attention, g.dst_ptr[:-1], axis=0)
    assert np.max(np.abs(sums - 1)) < 1e-6


def test_gat_isolated_node():
    store, layer = _gat(heads=2, f_out=3)
    g = make_graph_batch(1, np.zeros((0, 2)), np.zeros((0, 4)))
    x = np.array([[0.3, -1.0, 2.0]])
    out = layer.forward(x, g)
    assert np.allclose(layer.attention, 1.0)
    assert np.allclose(out, x @ store["g.W"] + store["g.bias"])


def test_gat_three_node_oracle():
    rng = np.random.default_rng(9)
    for concat in (True, False):
        store, layer = _gat(f_in=2, f_out=2, heads=2, concat=concat, seed=1)
        store["g.bias"][...] = rng.standard_normal(store["g.bias"].shape)
        path = [(0, 1), (1, 2)]
        attr = rng.standard_normal((2, 4))
        g = make_graph_batch(3, path, attr)
        x = rng.standard_normal((3, 2))
        out = layer.forward(x, g)
        edges = [(0, 1), (1, 0), (1, 2), (2, 1), (0, 0), (1, 1), (2, 2)]
        eattr = [attr[0], attr[0], attr[1], attr[1], np.zeros(4), np.zeros(4), np.zeros(4)]
        ref = gat_oracle(x, edges, eattr, store["g.W"], store["g.att_src"], store["g.att_dst"],
                         store["g.U"], store["g.att_edge"], store["g.bias"], 2, concat)
        assert np.max(np.abs(out - ref)) < 1e-6


def test_gat_permutation_equivariance():
    rng = np.random.default_rng(10)
    store, layer = _gat()
    n = 8
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    attr = rng.standard_normal((len(pairs), 4))
    x = rng.standard_normal((n, 3))
    out = layer.forward(x, make_graph_batch(n, pairs, attr))
    perm = rng.permutation(n)
    inv = np.argsort(perm)
    # node k of the new graph is old node perm[k]
    new_pairs = [(inv[i], inv[j]) for i, j in pairs]
    out_p = layer.forward(x[perm], make_graph_batch(n, new_pairs, attr))
    assert np.max(np.abs(out_p - out[perm])) < 1e-12


def test_gat_index_errors():
    with pytest.raises(GraphError):
        make_graph_batch(3, [(0, 3)], np.zeros((1, 4)))
    store, layer = _gat()
    g = make_graph_batch(3, [(0, 1)], np.zeros((1, 4)))
    with pytest.raises(GraphError):
        layer.forward(np.zeros((4, 3)), g)


def test_batched_graphs_match_single():
    rng = np.random.default_rng(11)
    store, layer = _gat()
    pairs = [(i, j) for i in range(8) for j in range(i + 1, 8)]
    nodes = rng.standard_normal((3, 8, 3))
    edges = rng.standard_normal((3, 28, 4))
    x, g = batch_complete_graphs(nodes, edges, pairs)
    batched = layer.forward(x, g)
    for b in range(3):
        single = layer.forward(nodes[b], make_graph_batch(8, pairs, edges[b]))
        assert np.allclose(batched[8 * b: 8 * b + 8], single, atol=1e-12)


def test_global_max_pool():
    rng = np.random.default_rng(12)
    x = rng.standard_normal((10, 4))
    out, _ = F.global_max_pool_forward(x, np.array([0, 1, 10]))
    assert np.array_equal(out[0], x[0])
    assert np.array_equal(out[1], x[1:].max(axis=0))
    perm = np.r_[0, 1 + rng.permutation(9)]
    assert np.array_equal(F.global_max_pool_forward(x[perm], np.array([0, 1, 10]))[0], out)


# gradient checks -------------------------------------------------------------------------------

def test_gradcheck_small_layers():
    rng = np.random.default_rng(13)
    cases = [
        (Conv2d(_store(), "c", 2, 3, rng=rng), rng.standard_normal((2, 2, 6, 6)), {}),
        (Dense(_store(), "d", 5, 4, rng=rng), rng.standard_normal((3, 5)), {}),
        (ELU(), rng.standard_normal((4, 5)), {}),
        (ReLU(), rng.standard_normal((4, 5)) + 0.05 * np.sign(rng.standard_normal((4, 5))), {}),
    ]
    for layer, x, kw in cases:
        err, _ = grad_check_layer(layer, x, eps=1e-5, forward_kwargs=kw)
        assert err < 1e-4, type(layer).__name__
    bn = BatchNorm2d(_store(), "bn", 3)
    bn.store["bn.gamma"][...] = rng.uniform(0.5, 1.5, 3)
    err, _ = grad_check_layer(bn, rng.standard_normal((4, 3, 3, 3)), eps=1e-5)
    assert err < 1e-4


def test_gradcheck_gat():
    rng = np.random.default_rng(14)
    for concat in (True, False):
        store, layer = _gat(concat=concat, seed=3)
        _, g = _complete(5, rng)
        err, _ = grad_check_layer(layer, rng.standard_normal((5, 3)), eps=1e-5, forward_kwargs={"graph": g})
        assert err < 1e-4


def test_gradcheck_dropout_fixed_mask():
    rng = np.random.default_rng(15)
    d = Dropout(0.5)
    x = rng.standard_normal((6, 7))
    d.fixed_mask = F.dropout_mask(x.shape, 0.5, rng, np.float64)
    err, _ = grad_check_layer(d, x, eps=1e-5)
    assert err < 1e-4


def test_grad_check_catches_wrong_gradient():
    x = np.array([1.0, 2.0, 3.0])
    err, _ = grad_check(lambda: x ** 2, lambda r: {"x": r * x}, {"x": x}, eps=1e-5)
    assert err > 0.1


# optimiser and scheduler --------------------------------------------------------------------------

def test_sgd_cases():
    store = _store()
    store.add("p", np.array([1.0, -2.0]))
    sgd_step(store, 0.1, 0.9, 0.0)
    assert np.array_equal(store["p"], [1.0, -2.0])
    # momentum 0: two plain steps
    store.grads["p"][...] = [0.5, 1.0]
    sgd_step(store, 0.1, 0.0, 0.0)
    sgd_step(store, 0.1, 0.0, 0.0)
    assert np.allclose(store["p"], [1.0 - 0.1, -2.0 - 0.2])
    # closed form with momentum and decay for one parameter
    s2 = _store()
    s2.add("w", np.array([2.0]))
    v, w = 0.0, 2.0
    for _ in range(3):
        s2.grads["w"][...] = 0.3
        sgd_step(s2, 0.05, 0.9, 0.01)
        v = 0.9 * v + 0.3 + 0.01 * w
        w = w - 0.05 * v
    assert s2["w"][0] == pytest.approx(w, abs=1e-15)


def test_sgd_quadratic_converges():
    store = _store()
    store.add("w", np.array([3.0]))
    prev = 3.0
    for _ in range(50):
        store.grads["w"][...] = 2 * store["w"]
        sgd_step(store, 0.05, 0.0, 0.0)
        assert abs(store["w"][0]) < abs(prev)
        prev = store["w"][0]
    assert abs(prev) < 0.1


def test_plateau_rule_traces():
    s = PlateauScheduler(1e-3)
    decays = [e for e, loss in enumerate([1.0] * 40, start=1) if s.step(loss)]
    assert decays[0] == 6 and decays[1] >= 11
    s = PlateauScheduler(1e-3)
    assert not any(s.step(1.0 / e) for e in range(1, 41))
    assert s.current_lr == 1e-3
    s = PlateauScheduler(1e-3)
    for loss in (1.0, 0.9, 0.8, 0.8, 0.8):
        s.step(loss)
    assert s.epochs_since_improvement == 2
    s.step(0.7)
    assert s.epochs_since_improvement == 0
    st = plateau_step(PlateauScheduler(1e-3), 0.5)
    assert st.best_val_loss == 0.5
    assert PlateauScheduler.from_state(st.state_dict()) == st


# checkpoint ------------------------------------------------------------------------------------

def test_checkpoint_round_trip_and_layout(tmp_path):
    store = ParamStore(np.float32)
    store.add("b.w", np.arange(6).reshape(2, 3))
    store.add("a.bias", [0.5, -1.5])
    store.add_buffer("a.running_mean", [1.0, 2.0])
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, store, {"variant": "D"})
    raw = path.read_bytes()
    assert raw[:8] == b"NEUROCKP"
    (hlen,) = struct.unpack("<Q", raw[8:16])
    blob = raw[16 + hlen:]
    assert len(blob) == 4 * (6 + 2 + 2)
    header, arrays = load_checkpoint(path)
    assert header["variant"] == "D"
    for k in ("b.w", "a.bias", "a.running_mean"):
        assert np.array_equal(arrays[k], store[k])
    save_checkpoint(tmp_path / "y.ckpt", store, {"variant": "D"})
    assert (tmp_path / "y.ckpt").read_bytes() == raw
