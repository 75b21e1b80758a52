"""``neuroergo`` command line: synth, extract, train, evaluate, cv, gridsearch.

The optional ``--config`` file is JSON with the sections below; any key not
listed is rejected. Command-line flags override file values.

.. code-block:: json

    {"seed": 0, "model": "D", "threads": 1, "group_by_subject": false,
     "generator": {"n_subjects": 26, "...": "GeneratorConfig fields"},
     "architecture": {"cnn_layers": 4, "...": "ModelConfig fields except variant"},
     "train": {"epochs": 40, "...": "TrainConfig fields"},
     "stft": {"leakage": 0.875, "...": "StftConfig fields"}}
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields

import numpy as np

from .dataset import FeatureTable, extract_dataset
from .errors import NeuroErgoError, ParameterError
from .models import Model, ModelConfig
from .spectrogram import StftConfig
from .synth import GeneratorConfig, dumps_json, gen_dataset
from .training import (Normalizer, TrainConfig, cross_validate, evaluate, grid_search, holdout_split,
                       table5_csv, train_model)

log = logging.getLogger("neuroergo")

_SECTIONS = {"generator": GeneratorConfig, "architecture": ModelConfig, "train": TrainConfig,
             "stft": StftConfig}


@dataclass
class RunConfig:
    seed: int = 0
    model: str = "D"
    threads: int = 1
    group_by_subject: bool = False
    generator: dict = field(default_factory=dict)
    architecture: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    stft: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        for name, klass in _SECTIONS.items():
            sub = d.get(name, {})
            if not isinstance(sub, dict):
                raise ParameterError(f"config section {name!r} must be an object")
            allowed = {f.name for f in fields(klass)} - {"variant", "seed"}
            bad = set(sub) - allowed
            if bad:
                raise ParameterError(f"unknown keys in {name!r}: {sorted(bad)}")
        return cls(**d)

    def generator_config(self):
        return GeneratorConfig(**self.generator, seed=self.seed)

    def model_config(self):
        return ModelConfig(variant=self.model, **self.architecture)

    def train_config(self):
        return TrainConfig(**self.train)

    def stft_config(self):
        return StftConfig(**self.stft)


def load_config(args):
    d = {}
    if args.config:
        with open(args.config) as fh:
            d = json.load(fh)
        if not isinstance(d, dict):
            raise ParameterError("config file must hold a JSON object")
    cfg = RunConfig.from_dict(d)
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "model", None):
        cfg.model = args.model
    if args.threads is not None:
        cfg.threads = args.threads
    if getattr(args, "group_by_subject", False):
        cfg.group_by_subject = True
    return cfg


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)


def _split(table, cfg: RunConfig, tc: TrainConfig):
    return holdout_split(table, tc, cfg.seed, cfg.group_by_subject)


def _curves_csv(history):
    rows = ["epoch,train_loss,train_acc,val_loss,val_acc,lr"]
    for i in range(len(history["train_loss"])):
        rows.append(",".join([str(i + 1)] + [repr(float(history[k][i])) for k in
                                             ("train_loss", "train_acc", "val_loss", "val_acc", "lr")]))
    return "\n".join(rows) + "\n"


# commands --------------------------------------------------------------------

def cmd_synth(args, cfg: RunConfig):
    os.makedirs(args.out, exist_ok=True)
    manifest = gen_dataset(cfg.generator_config(), args.out)
    print(f"wrote {len(manifest['samples'])} samples to {args.out}")


def cmd_extract(args, cfg: RunConfig):
    index = extract_dataset(args.dataset, args.out, cfg.stft_config())
    print(f"extracted {len(index['samples'])} samples to {args.out}")


def cmd_train(args, cfg: RunConfig):
    table = FeatureTable.load(args.features)
    tc = cfg.train_config()
    mc = cfg.model_config()
    _, te, fit, val = _split(table, cfg, tc)
    norm = Normalizer.fit(table.subset(fit))
    res = train_model(mc, norm.apply(table.subset(fit)), norm.apply(table.subset(val)), tc, seed=cfg.seed)
    os.makedirs(args.out, exist_ok=True)
    meta = {"train_config": tc.to_dict(), "normalizer": norm.to_dict(), "best_epoch": res.best_epoch,
            "test_ids": table.ids[te].tolist(), "history": res.history,
            "group_by_subject": cfg.group_by_subject}
    model = res.model
    model.save(os.path.join(args.out, "model.ckpt"), meta)
    model.store.restore(res.final_state)
    model.save(os.path.join(args.out, "model_final.ckpt"), meta)
    _write(os.path.join(args.out, "curves.csv"), _curves_csv(res.history))
    print(f"model {mc.variant}: best epoch {res.best_epoch}, val loss {min(res.history['val_loss']):.4f}")


def cmd_evaluate(args, cfg: RunConfig):
    if not os.path.isfile(args.checkpoint):
        raise FileNotFoundError(f"checkpoint not found: {args.checkpoint}")
    model, header = Model.load(args.checkpoint)
    table = FeatureTable.load(args.features)
    ids = header.get("test_ids")
    if ids and not args.all:
        wanted = set(ids)
        table = table.subset(np.flatnonzero([i in wanted for i in table.ids]))
    table = Normalizer.from_dict(header["normalizer"]).apply(table)
    metrics, fc2_in = evaluate(model, table)
    os.makedirs(args.out, exist_ok=True)
    report = {
        "model": header["variant"],
        "n": metrics["n"],
        "accuracy": metrics["accuracy"],
        "confusion": metrics["confusion"].tolist(),
        "auc": metrics["auc"],
        "best_epoch": header.get("best_epoch"),
        "curves": header.get("history"),
    }
    _write(os.path.join(args.out, "metrics.json"), dumps_json(report))
    with open(os.path.join(args.out, "roc.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["curve", "fpr", "tpr"])
        for key, r in metrics["roc"].items():
            for a, b in zip(r["fpr"], r["tpr"]):
                w.writerow([key, repr(float(a)), repr(float(b))])
    from . import plots
    from .tsne import tsne

    if header.get("history"):
        _write(os.path.join(args.out, "curves.csv"), _curves_csv(header["history"]))
        plots.plot_curves(header["history"], os.path.join(args.out, "curves.svg"))
    plots.plot_roc(metrics["roc"], os.path.join(args.out, "roc.svg"))
    plots.plot_confusion(metrics["confusion"], os.path.join(args.out, "confusion.svg"))
    perplexity = min(30.0, (len(table) - 1) / 3.0 - 1.0)
    if perplexity >= 2:
        emb = tsne(fc2_in, perplexity=perplexity, seed=cfg.seed).embedding
        with open(os.path.join(args.out, "tsne.csv"), "w") as fh:
            fh.write("id,label,x,y\n")
            for i, lab, (x, y) in zip(table.ids, table.labels, emb):
                fh.write(f"{i},{lab},{x!r},{y!r}\n")
        plots.plot_tsne(emb, table.labels, os.path.join(args.out, "tsne.svg"))
    print(f"accuracy {report['accuracy']:.4f}  micro-AUC {report['auc']['micro']:.4f}")


def _training_part(table, cfg, tc):
    tr, _, _, _ = _split(table, cfg, tc)
    return table.subset(tr)


def cmd_cv(args, cfg: RunConfig):
    table = FeatureTable.load(args.features)
    tc = cfg.train_config()
    res = cross_validate(_training_part(table, cfg, tc), cfg.model_config(), tc, cfg.seed,
                         cfg.group_by_subject, cfg.threads)
    os.makedirs(args.out, exist_ok=True)
    rows = [{"axis": None, "value": None, "mean": res["mean"], "std": res["std"], "selected": True}]
    _write(os.path.join(args.out, "cv.csv"), table5_csv(rows))
    _write(os.path.join(args.out, "cv.json"), dumps_json(res))
    print(f"model {cfg.model}: 5-fold micro-AUC {res['mean']:.4f}±{res['std']:.4f}")


def cmd_gridsearch(args, cfg: RunConfig):
    table = FeatureTable.load(args.features)
    tc = cfg.train_config()
    best_mc, best_tc, rows = grid_search(_training_part(table, cfg, tc), cfg.model_config(), tc, cfg.seed,
                                         cfg.group_by_subject, cfg.threads)
    os.makedirs(args.out, exist_ok=True)
    _write(os.path.join(args.out, "table5.csv"), table5_csv(rows))
    _write(os.path.join(args.out, "grid.json"), dumps_json(
        {"rows": rows, "best_architecture": best_mc.to_dict(), "best_train": best_tc.to_dict()}))
    print(table5_csv(rows), end="")


# entry point ------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="RNG seed (overrides config)")
    common.add_argument("--threads", type=int, help="worker cap for cross-validation")
    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--model", choices=list("ABCD"), help="model variant")
    model.add_argument("--group-by-subject", action="store_true",
                       help="keep each subject's samples on one side of every split")

    p = argparse.ArgumentParser(prog="neuroergo", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    s.add_argument("--out", required=True)
    s = sub.add_parser("extract", parents=[common], help="extract features from a dataset")
    s.add_argument("dataset")
    s.add_argument("--out", required=True)
    for name, helptext in (("train", "train a model"), ("cv", "5-fold cross-validation"),
                           ("gridsearch", "one-axis-at-a-time grid search")):
        s = sub.add_parser(name, parents=[common, model], help=helptext)
        s.add_argument("features")
        s.add_argument("--out", required=True)
    s = sub.add_parser("evaluate", parents=[common], help="evaluate a checkpoint")
    s.add_argument("checkpoint")
    s.add_argument("features")
    s.add_argument("--out", required=True)
    s.add_argument("--all", action="store_true", help="score every sample, not only the held-out test set")
    return p


COMMANDS = {"synth": cmd_synth, "extract": cmd_extract, "train": cmd_train, "evaluate": cmd_evaluate,
            "cv": cmd_cv, "gridsearch": cmd_gridsearch}


def _setup_logging():
    level = os.environ.get("NEUROERGO_LOG", "WARNING").upper()
    logging.basicConfig(level=int(level) if level.isdigit() else getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        COMMANDS[args.command](args, cfg)
    except (NeuroErgoError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
