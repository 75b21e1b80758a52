import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neuroergo.dataset import FeatureTable
from neuroergo.errors import DivergenceError, ParameterError
from neuroergo.models import ModelConfig
from neuroergo.training import (Normalizer, TrainConfig, cross_validate, evaluate, grid_search, group_kfold,
                                group_split, holdout_split, stratified_kfold, stratified_split, table5_csv,
                                train_model)

SMALL = dict(cnn_layers=2, cnn_hidden=4, fc1_out=8, gat_hidden=2, gat_heads=2, gat_out=4)


def _table(n=60, seed=0, signal=1.0):
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 3 + 1
    images = rng.standard_normal((n, 3, 64, 64)).astype(np.float32)
    images += signal * (labels - 2)[:, None, None, None]
    ecg = rng.standard_normal((n, 20)) + signal * labels[:, None]
    fnirs = rng.standard_normal((n, 136)) + signal * labels[:, None]
    return FeatureTable(np.array([f"x{i}" for i in range(n)]), np.arange(n) // 6 + 1, (np.arange(n) % 4) + 1,
                        np.ones(n, int), labels, images, ecg, fnirs)


# normaliser -------------------------------------------------------------------------------

def test_normalizer_statistics_and_constant_feature():
    t = _table()
    t.ecg[:, 3] = 7.0
    norm = Normalizer.fit(t)
    out = norm.apply(t)
    assert np.max(np.abs(out.ecg.mean(axis=0))) < 1e-9
    assert out.ecg[:, 3].tolist() == [0.0] * len(t)
    assert norm.flagged == {"ecg": [3]}
    sd = out.ecg.std(axis=0)
    assert np.allclose(np.delete(sd, 3), 1)
    assert np.allclose(out.images.mean(axis=(0, 2, 3)), 0, atol=1e-4)
    back = Normalizer.from_dict(norm.to_dict())
    assert np.array_equal(back.apply(t).fnirs, out.fnirs)


# splits -------------------------------------------------------------------------------------

def test_stratified_split_sizes():
    labels = np.repeat([1, 2, 3], [172, 172, 171])
    tr, te = stratified_split(labels, 0.8, seed=0)
    assert tr.size == 412 and te.size == 103
    assert np.intersect1d(tr, te).size == 0
    assert np.array_equal(np.sort(np.r_[tr, te]), np.arange(515))
    for c in (1, 2, 3):
        frac = np.mean(labels[tr] == c) - np.mean(labels == c)
        assert abs(frac) < 0.01
    assert np.array_equal(stratified_split(labels, 0.8, seed=0)[0], tr)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 3), min_size=10, max_size=200), st.integers(2, 6), st.integers(0, 99))
def test_stratified_kfold_partition(labels, k, seed):
    labels = np.array(labels)
    if labels.size < k:
        return
    folds = stratified_kfold(labels, k, seed)
    vals = np.concatenate([v for _, v in folds])
    assert np.array_equal(np.sort(vals), np.arange(labels.size))
    sizes = [v.size for _, v in folds]
    assert max(sizes) - min(sizes) <= 1
    for c in np.unique(labels):
        per = [int(np.sum(labels[v] == c)) for _, v in folds]
        assert max(per) - min(per) <= 1
    for fit, val in folds:
        assert np.intersect1d(fit, val).size == 0


def test_group_splits_keep_subjects_together():
    groups = np.repeat(np.arange(1, 27), 12)
    tr, te = group_split(groups, 0.8, seed=1)
    assert not set(groups[tr]) & set(groups[te])
    assert te.size >= 0.2 * groups.size
    for fit, val in group_kfold(groups, 5, seed=2):
        assert not set(groups[fit]) & set(groups[val])
    with pytest.raises(ParameterError):
        group_kfold(np.array([1, 1, 2]), 5)


def test_holdout_split_is_disjoint():
    t = _table(100)
    tr, te, fit, val = holdout_split(t, TrainConfig(), seed=3)
    assert np.array_equal(np.sort(np.r_[fit, val]), tr)
    assert np.intersect1d(tr, te).size == 0
    assert val.size == 16 and te.size == 20


# training -----------------------------------------------------------------------------------

def test_small_run_learns_and_is_deterministic():
    t = Normalizer.fit(_table()).apply(_table())
    cfg = TrainConfig(batch_size=16, epochs=8, lr0=1e-2)
    a = train_model(ModelConfig(variant="B", **SMALL), t, t, cfg, seed=0)
    b = train_model(ModelConfig(variant="B", **SMALL), t, t, cfg, seed=0)
    assert a.history == b.history
    assert a.history["train_loss"][-1] < a.history["train_loss"][0]
    assert a.best_epoch == int(np.argmin(a.history["val_loss"])) + 1
    metrics, fc2_in = evaluate(a.model, t)
    assert metrics["accuracy"] > 0.9
    assert fc2_in.shape == (60, 8 + 20)
    assert np.trace(metrics["confusion"]) == round(metrics["accuracy"] * 60)


def test_divergence_is_reported():
    t = Normalizer.fit(_table()).apply(_table())
    t.ecg[0, 0] = np.nan
    with pytest.raises(DivergenceError):
        train_model(ModelConfig(variant="B", **SMALL), t, None, TrainConfig(batch_size=64, epochs=1), seed=0)


def test_cross_validate_and_single_cell_grid():
    t = _table(45, signal=2.0)
    mc = ModelConfig(variant="A", **SMALL)
    cfg = TrainConfig(batch_size=32, epochs=2, lr0=1e-2, folds=3, grid={})
    cv = cross_validate(t, mc, cfg, seed=0)
    assert len(cv["folds"]) == 3 and 0 <= cv["mean"] <= 1
    best_mc, best_tc, rows = grid_search(t, mc, cfg, seed=0)
    assert best_mc == mc and best_tc == cfg
    assert len(rows) == 1 and rows[0]["mean"] == cv["mean"]
    csv = table5_csv(rows)
    assert csv.splitlines()[1].startswith("default,")


def test_grid_reuses_default_cell():
    t = _table(45, signal=2.0)
    mc = ModelConfig(variant="A", **SMALL)
    cfg = TrainConfig(batch_size=32, epochs=1, folds=3, grid={"fc1_out": [8, 16]})
    best_mc, _, rows = grid_search(t, mc, cfg, seed=0)
    assert [r["value"] for r in rows] == [8, 16]
    assert sum(r["selected"] for r in rows) == 1
    assert best_mc.fc1_out in (8, 16)


def test_train_config_validation():
    with pytest.raises(ParameterError):
        TrainConfig(split_ratio=1.0)
    with pytest.raises(ParameterError):
        TrainConfig(grid={"colour": [1]})
