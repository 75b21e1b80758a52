import numpy as np
import pytest

from neuroergo.errors import InputError, ParameterError
from neuroergo.models import (Batch, Model, ModelConfig, backbone_cnn, backbone_gat, expected_param_counts,
                              graph_inputs)

TABLE_ROWS = [
    ("input", (128, 3, 64, 64)),
    ("conv1", (128, 64, 32, 32)),
    ("conv2", (128, 128, 16, 16)),
    ("conv3", (128, 256, 8, 8)),
    ("conv4", (128, 512, 4, 4)),
    ("resize", (128, 8192)),
    ("fc1", (128, 128)),
]


def _batch(b, seed=0, labels=True):
    rng = np.random.default_rng(seed)
    return Batch(rng.standard_normal((b, 3, 64, 64)).astype(np.float32),
                 rng.standard_normal((b, 20)).astype(np.float32),
                 rng.standard_normal((b, 136)).astype(np.float32),
                 rng.integers(1, 4, b) if labels else None)


def test_model_a_shape_trace():
    m = Model(ModelConfig(variant="A"))
    m.forward(_batch(128))
    assert m.shape_trace == TABLE_ROWS + [("fc2_in", (128, 128)), ("fc2", (128, 3))]


@pytest.mark.parametrize("variant,width", [("A", 128), ("B", 148), ("C", 284), ("D", 180)])
def test_fc2_input_widths(variant, width):
    cfg = ModelConfig(variant=variant)
    assert cfg.fc2_in == width
    m = Model(cfg)
    out = m.forward(_batch(4))
    assert out.shape == (4, 3)
    assert m.last_fc2_input.shape == (4, width)


def test_parameter_counts():
    cfg = ModelConfig(variant="D")
    m = Model(cfg)
    counts = expected_param_counts(cfg)
    for prefix, n in counts.items():
        assert m.n_params(prefix) == n, prefix
    assert m.n_params() == sum(counts.values())
    assert counts["conv1."] == 64 * 3 * 9 + 64
    assert counts["fc1."] == 8192 * 128 + 128
    assert counts["fc2."] == 180 * 3 + 3


def test_missing_modality_and_bad_variant():
    b = _batch(2)
    with pytest.raises(InputError):
        Model(ModelConfig(variant="B")).forward(Batch(b.images))
    with pytest.raises(InputError):
        Model(ModelConfig(variant="D")).forward(Batch(b.images, b.ecg))
    with pytest.raises(InputError):
        Model(ModelConfig(variant="A")).forward(Batch(b.images[:, :, :32, :32]))
    with pytest.raises(ParameterError):
        ModelConfig(variant="E")
    # model A ignores the extra modalities
    m = Model(ModelConfig(variant="A"))
    assert np.array_equal(m.forward(b), m.forward(Batch(b.images)))


def test_graph_inputs_layout():
    v = np.arange(136, dtype=float)[None]
    nodes, edges = graph_inputs(v)
    assert nodes.shape == (1, 8, 3) and edges.shape == (1, 28, 4)
    assert nodes[0, 0].tolist() == [0, 8, 16]
    assert edges[0, 0].tolist() == [24, 52, 80, 108]


def test_model_d_ignores_fnirs_when_gat_weights_zeroed():
    m = Model(ModelConfig(variant="D"))
    m.store["fc2.weight"][148:] = 0
    b = _batch(3)
    other = Batch(b.images, b.ecg, np.random.default_rng(9).standard_normal((3, 136)).astype(np.float32))
    assert np.array_equal(m.forward(b), m.forward(other))


def test_eval_determinism_and_train_dropout():
    m = Model(ModelConfig(variant="D"), seed=3)
    b = _batch(4)
    assert np.array_equal(m.forward(b), m.forward(b))
    # same seed gives the same initial parameters
    assert np.array_equal(Model(ModelConfig(variant="D"), seed=3).forward(b), m.forward(b))
    t1 = m.forward(b, train=True, rng=np.random.default_rng(0))
    t2 = m.forward(b, train=True, rng=np.random.default_rng(0))
    assert np.array_equal(t1, t2)
    assert not np.array_equal(t1, m.forward(b))


def test_backbones():
    m = Model(ModelConfig(variant="D"))
    b = _batch(5)
    assert backbone_cnn(m, b.images).shape == (5, 128)
    g = backbone_gat(m, b.fnirs)
    assert g.shape == (5, 32)
    with pytest.raises(InputError):
        backbone_gat(Model(ModelConfig(variant="A")), b.fnirs)


def test_small_gat_variants():
    for layers, width in ((1, 4 * 8), (3, 32)):
        cfg = ModelConfig(variant="D", gat_layers=layers)
        assert cfg.gat_dim == width
        m = Model(cfg)
        m.forward(_batch(2))
        assert m.last_fc2_input.shape == (2, 148 + width)


def test_backward_fills_all_gradients():
    m = Model(ModelConfig(variant="D", cnn_layers=3, cnn_hidden=8, fc1_out=16))
    b = _batch(4)
    m.store.zero_grad()
    m.backward(np.ones((4, 3), np.float32) * m.forward(b, train=True, rng=np.random.default_rng(0)))
    for name, g in m.store.grads.items():
        assert np.all(np.isfinite(g)), name
        assert np.any(g != 0), name


def test_checkpoint_round_trip(tmp_path):
    m = Model(ModelConfig(variant="C", cnn_hidden=16), seed=5)
    p = tmp_path / "c.ckpt"
    m.save(p, {"note": "x"})
    back, header = Model.load(p, expect_variant="C")
    assert header["note"] == "x" and back.cfg == m.cfg
    b = _batch(3)
    assert np.array_equal(back.forward(b), m.forward(b))
    with pytest.raises(ParameterError):
        Model.load(p, expect_variant="D")
