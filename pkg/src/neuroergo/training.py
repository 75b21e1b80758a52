"""Normalisation, splitting, the training loop, cross-validation and the
one-axis-at-a-time grid search."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .dataset import FeatureTable
from .errors import DivergenceError, ParameterError
from .metrics import accuracy, auc_summary, confusion_matrix, roc_auc
from .models import Batch, Model, ModelConfig
from .nn import PlateauScheduler, sgd_step
from .nn import functional as F

log = logging.getLogger(__name__)

MODEL_AXES = ("cnn_layers", "cnn_hidden", "fc1_out", "gat_layers", "gat_heads", "gat_hidden")
TRAIN_AXES = ("batch_size", "weight_decay")
DEFAULT_GRID = {
    "batch_size": [64, 128, 256],
    "weight_decay": [1e-2, 1e-3, 1e-4],
    "cnn_layers": [3, 4, 5],
    "cnn_hidden": [32, 64, 128],
    "fc1_out": [64, 128, 256],
    "gat_layers": [1, 2, 3],
    "gat_heads": [3, 4, 5],
    "gat_hidden": [4, 8, 16],
}


@dataclass
class TrainConfig:
    batch_size: int = 128
    epochs: int = 40
    lr0: float = 1e-3
    momentum: float = 0.9
    weight_decay: float = 1e-3
    patience: int = 5
    cooldown: int = 5
    lr_factor: float = 0.5
    split_ratio: float = 0.8
    val_fraction: float = 0.2
    folds: int = 5
    grid: dict = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_GRID.items()})

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ParameterError("batch_size and epochs must be positive")
        if not 0 < self.split_ratio < 1 or not 0 <= self.val_fraction < 1:
            raise ParameterError("split fractions must lie in (0, 1)")
        if self.folds < 2:
            raise ParameterError("need at least 2 folds")
        unknown = set(self.grid) - set(MODEL_AXES) - set(TRAIN_AXES)
        if unknown:
            raise ParameterError(f"unknown grid axes: {sorted(unknown)}")

    def to_dict(self):
        return asdict(self)


# normalisation -------------------------------------------------------------

@dataclass
class Normalizer:
    ecg_mean: np.ndarray
    ecg_std: np.ndarray
    fnirs_mean: np.ndarray
    fnirs_std: np.ndarray
    image_mean: np.ndarray
    image_std: np.ndarray
    flagged: dict = field(default_factory=dict)

    @staticmethod
    def _stats(x, axis):
        mu = x.mean(axis=axis)
        sd = x.std(axis=axis)
        zero = np.flatnonzero(sd == 0)
        sd = np.where(sd == 0, 1.0, sd)
        return mu, sd, zero.tolist()

    @classmethod
    def fit(cls, table: FeatureTable):
        em, es, ez = cls._stats(table.ecg.astype(np.float64), 0)
        fm, fs, fz = cls._stats(table.fnirs.astype(np.float64), 0)
        im, is_, iz = cls._stats(table.images.astype(np.float64), (0, 2, 3))
        flagged = {k: v for k, v in (("ecg", ez), ("fnirs", fz), ("image", iz)) if v}
        if flagged:
            log.warning("constant features given unit scale: %s", flagged)
        return cls(em, es, fm, fs, im, is_, flagged)

    def apply(self, table: FeatureTable) -> FeatureTable:
        shape = (1, -1, 1, 1)
        images = ((table.images - self.image_mean.reshape(shape)) / self.image_std.reshape(shape))
        return replace(table, images=images.astype(np.float32),
                       ecg=(table.ecg - self.ecg_mean) / self.ecg_std,
                       fnirs=(table.fnirs - self.fnirs_mean) / self.fnirs_std)

    def to_dict(self):
        d = {k: np.asarray(getattr(self, k)).tolist() for k in
             ("ecg_mean", "ecg_std", "fnirs_mean", "fnirs_std", "image_mean", "image_std")}
        d["flagged"] = self.flagged
        return d

    @classmethod
    def from_dict(cls, d):
        arrays = {k: np.asarray(v, dtype=np.float64) for k, v in d.items() if k != "flagged"}
        return cls(**arrays, flagged=d.get("flagged", {}))


# splitting -----------------------------------------------------------------

def stratified_split(labels, ratio=0.8, seed=0):
    """Per-class shuffled split; returns sorted ``(train_idx, test_idx)``."""
    labels = np.asarray(labels)
    rng = np.random.default_rng([seed, 11])
    classes, sizes = np.unique(labels, return_counts=True)
    # largest remainder, so the total is round(ratio * n)
    exact = ratio * sizes
    take = np.floor(exact).astype(int)
    short = int(round(ratio * labels.size)) - take.sum()
    take[np.argsort(-(exact - take), kind="stable")[:short]] += 1
    train, test = [], []
    for c, k in zip(classes, take):
        idx = rng.permutation(np.flatnonzero(labels == c))
        train.append(idx[:k])
        test.append(idx[k:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def group_split(groups, ratio=0.8, seed=0):
    """Whole groups (subjects) go to one side; the test side takes shuffled
    groups until it holds at least ``1 - ratio`` of the samples."""
    groups = np.asarray(groups)
    rng = np.random.default_rng([seed, 12])
    order = rng.permutation(np.unique(groups))
    target = (1 - ratio) * groups.size
    test_groups, count = [], 0
    for g in order:
        if count >= target:
            break
        test_groups.append(g)
        count += int(np.sum(groups == g))
    is_test = np.isin(groups, test_groups)
    return np.flatnonzero(~is_test), np.flatnonzero(is_test)


def holdout_split(table: FeatureTable, cfg: TrainConfig = TrainConfig(), seed=0, group_by_subject=False):
    """Train/test split, then a validation hold-out from the training part.

    Returns ``(train_idx, test_idx, fit_idx, val_idx)`` into ``table``.
    """
    if group_by_subject:
        tr, te = group_split(table.subject, cfg.split_ratio, seed)
        fit, val = group_split(table.subject[tr], 1 - cfg.val_fraction, seed + 1)
    else:
        tr, te = stratified_split(table.labels, cfg.split_ratio, seed)
        fit, val = stratified_split(table.labels[tr], 1 - cfg.val_fraction, seed + 1)
    return tr, te, tr[fit], tr[val]


def stratified_kfold(labels, k=5, seed=0):
    """``k`` ``(fit_idx, val_idx)`` pairs; every index validates once.

    Each class is shuffled and dealt round-robin, continuing from the fold
    where the previous class stopped, so fold sizes differ by at most one
    and per-class counts by at most one.
    """
    labels = np.asarray(labels)
    if labels.size < k:
        raise ParameterError(f"{labels.size} samples cannot fill {k} folds")
    rng = np.random.default_rng([seed, 13])
    fold_of = np.empty(labels.size, dtype=np.intp)
    start = 0
    for c in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == c))
        fold_of[idx] = (start + np.arange(idx.size)) % k
        start = (start + idx.size) % k
    every = np.arange(labels.size)
    return [(every[fold_of != f], every[fold_of == f]) for f in range(k)]


def group_kfold(groups, k=5, seed=0):
    groups = np.asarray(groups)
    rng = np.random.default_rng([seed, 14])
    uniq = rng.permutation(np.unique(groups))
    if uniq.size < k:
        raise ParameterError(f"{uniq.size} groups cannot fill {k} folds")
    fold_of_group = {g: i % k for i, g in enumerate(uniq)}
    fold_of = np.array([fold_of_group[g] for g in groups])
    every = np.arange(groups.size)
    return [(every[fold_of != f], every[fold_of == f]) for f in range(k)]


# training ------------------------------------------------------------------

def make_batch(table: FeatureTable, idx=None):
    t = table if idx is None else table.subset(idx)
    return Batch(t.images, t.ecg, t.fnirs, t.labels)


def predict(model: Model, table: FeatureTable, batch_size=256, with_fc2_inputs=False):
    """Eval-mode class probabilities ``(n, 3)`` (and FC2 inputs if asked)."""
    probs, feats = [], []
    for s in range(0, len(table), batch_size):
        batch = make_batch(table, np.arange(s, min(s + batch_size, len(table))))
        probs.append(F.softmax(model.forward(batch, train=False).astype(np.float64)))
        if with_fc2_inputs:
            feats.append(model.last_fc2_input.astype(np.float64))
    probs = np.concatenate(probs)
    return (probs, np.concatenate(feats)) if with_fc2_inputs else probs


def _loss_acc(model, table):
    probs = predict(model, table)
    y = table.labels - 1
    loss = float(-np.mean(np.log(np.maximum(probs[np.arange(len(y)), y], 1e-300))))
    return loss, accuracy(probs.argmax(axis=1), y)


@dataclass
class TrainResult:
    model: Model
    history: dict
    best_epoch: int
    best_state: tuple
    final_state: tuple


def train_model(model_cfg: ModelConfig, train: FeatureTable, val: FeatureTable | None,
                cfg: TrainConfig = TrainConfig(), seed=0, eval_train=False, stop_at_train_acc=None):
    """SGD with momentum and a plateau schedule on validation loss.

    ``train``/``val`` must already be normalised. The returned model holds
    the parameters of the best-validation-loss epoch (training loss when
    ``val`` is None); ``final_state`` keeps the last epoch. With
    ``eval_train`` the training metrics are recomputed in eval mode after
    each epoch instead of averaged over the batches.
    """
    model = Model(model_cfg, seed=seed)
    rng = np.random.default_rng([seed, 2])
    sched = PlateauScheduler(cfg.lr0, cfg.patience, cfg.cooldown, cfg.lr_factor)
    hist = {k: [] for k in ("train_loss", "train_acc", "val_loss", "val_acc", "lr")}
    best, best_epoch, best_state = np.inf, 0, None
    n = len(train)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        tot_loss, tot_hit = 0.0, 0
        for s in range(0, n, cfg.batch_size):
            idx = np.sort(order[s:s + cfg.batch_size])
            batch = make_batch(train, idx)
            model.store.zero_grad()
            logits = model.forward(batch, train=True, rng=rng)
            loss, grad = F.softmax_cross_entropy(logits, batch.labels - 1)
            if not np.isfinite(loss):
                raise DivergenceError(f"loss became {loss} at epoch {epoch}, batch starting {s}"
                                      f" (lr {sched.current_lr:g})")
            model.backward(grad)
            sgd_step(model.store, sched.current_lr, cfg.momentum, cfg.weight_decay)
            tot_loss += loss * idx.size
            tot_hit += int(np.sum(logits.argmax(axis=1) == batch.labels - 1))
        if eval_train:
            tr_loss, tr_acc = _loss_acc(model, train)
        else:
            tr_loss, tr_acc = tot_loss / n, tot_hit / n
        if val is not None and len(val):
            va_loss, va_acc = _loss_acc(model, val)
        else:
            va_loss, va_acc = tr_loss, tr_acc
        if not np.isfinite(va_loss):
            raise DivergenceError(f"validation loss became {va_loss} at epoch {epoch}")
        hist["lr"].append(sched.current_lr)
        for k, v in (("train_loss", tr_loss), ("train_acc", tr_acc), ("val_loss", va_loss), ("val_acc", va_acc)):
            hist[k].append(float(v))
        if va_loss < best:
            best, best_epoch, best_state = va_loss, epoch, model.store.snapshot()
        sched.step(va_loss)
        log.info("epoch %d train %.4f/%.3f val %.4f/%.3f lr %g", epoch, tr_loss, tr_acc, va_loss,
                 va_acc, hist["lr"][-1])
        if stop_at_train_acc is not None and tr_acc >= stop_at_train_acc:
            break
    final_state = model.store.snapshot()
    model.store.restore(best_state)
    return TrainResult(model, hist, best_epoch, best_state, final_state)


def evaluate(model: Model, table: FeatureTable):
    """Metrics dict (JSON-ready apart from numpy ROC arrays) plus FC2 inputs."""
    probs, fc2_in = predict(model, table, with_fc2_inputs=True)
    preds = probs.argmax(axis=1) + 1
    roc = roc_auc(probs, table.labels)
    return {
        "n": len(table),
        "accuracy": accuracy(preds, table.labels),
        "confusion": confusion_matrix(preds, table.labels),
        "auc": auc_summary(roc),
        "roc": roc,
        "probs": probs,
        "preds": preds,
    }, fc2_in


# cross-validation and grid search ------------------------------------------

def _folds(table, cfg, seed, group_by_subject):
    if group_by_subject:
        return group_kfold(table.subject, cfg.folds, seed)
    return stratified_kfold(table.labels, cfg.folds, seed)


def _run_fold(table, model_cfg, cfg, seed, fold, fit_idx, val_idx):
    fit, val = table.subset(fit_idx), table.subset(val_idx)
    norm = Normalizer.fit(fit)
    fit, val = norm.apply(fit), norm.apply(val)
    res = train_model(model_cfg, fit, val, cfg, seed=int(np.random.SeedSequence([seed, fold]).generate_state(1)[0]))
    metrics, _ = evaluate(res.model, val)
    return {"fold": fold, "micro_auc": metrics["auc"]["micro"], "accuracy": metrics["accuracy"],
            "best_epoch": res.best_epoch, "history": res.history}


def cross_validate(table: FeatureTable, model_cfg: ModelConfig, cfg: TrainConfig = TrainConfig(), seed=0,
                   group_by_subject=False, workers=1):
    """Train on k-1 folds, score micro-AUC on the held-out fold."""
    folds = _folds(table, cfg, seed, group_by_subject)
    jobs = [(table, model_cfg, cfg, seed, f, a, b) for f, (a, b) in enumerate(folds)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(lambda j: _run_fold(*j), jobs))
    else:
        results = [_run_fold(*j) for j in jobs]
    aucs = np.array([r["micro_auc"] for r in results])
    return {"mean": float(aucs.mean()), "std": float(aucs.std()), "folds": results}


def _with_value(model_cfg, cfg, axis, value):
    if axis in MODEL_AXES:
        return replace(model_cfg, **{axis: value}), cfg
    return model_cfg, replace(cfg, **{axis: value})


def grid_search(table: FeatureTable, model_cfg: ModelConfig, cfg: TrainConfig = TrainConfig(), seed=0,
                group_by_subject=False, workers=1):
    """Vary one axis at a time around the defaults and score each cell by
    mean 5-fold micro-AUC. Cells equal to the default configuration share
    one CV run. Returns ``(best_model_cfg, best_train_cfg, rows)``."""
    cache = {}
    rows = []
    best_key, best_score = None, -np.inf

    def key_of(mc, tc):
        return (tuple(sorted(mc.to_dict().items())), tc.batch_size, tc.weight_decay)

    cells = [(axis, v) for axis, values in cfg.grid.items() for v in values] or [(None, None)]
    for axis, value in cells:
        mc, tc = (model_cfg, cfg) if axis is None else _with_value(model_cfg, cfg, axis, value)
        key = key_of(mc, tc)
        if key not in cache:
            cache[key] = (mc, tc, cross_validate(table, mc, tc, seed, group_by_subject, workers))
        cv = cache[key][2]
        rows.append({"axis": axis, "value": value, "mean": cv["mean"], "std": cv["std"]})
        if cv["mean"] > best_score:
            best_key, best_score = key, cv["mean"]
    best_mc, best_tc, _ = cache[best_key]
    for r in rows:
        mc, tc = (model_cfg, cfg) if r["axis"] is None else _with_value(model_cfg, cfg, r["axis"], r["value"])
        r["selected"] = key_of(mc, tc) == best_key
    return best_mc, best_tc, rows


def table5_csv(rows):
    """Rows in the ``hyper-parameter,value,5-fold CV micro-AUC`` layout."""
    lines = ["hyper_parameter,value,micro_auc_mean,micro_auc_std,formatted,selected"]
    last = object()
    for r in rows:
        name = "" if r["axis"] == last else (r["axis"] or "default")
        last = r["axis"]
        lines.append(f"{name},{r['value'] if r['value'] is not None else ''},{r['mean']:.6f},{r['std']:.6f},"
                     f"{r['mean']:.4f}±{r['std']:.4f},{int(r['selected'])}")
    return "\n".join(lines) + "\n"
