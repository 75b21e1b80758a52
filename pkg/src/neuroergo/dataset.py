"""Feature extraction over a dataset directory and the in-memory table
used for training.

Layout written by :func:`extract_dataset` under ``out_dir``::

    index.json                 sample rows (id, subject, scenario, task, label, files)
    ecg/<id>.csv               20 ECG features (header + one row)
    spec/<id>.f32, <id>.png    spectrogram tensor and preview
    fnirs/<fnirs_id>.csv       136 fNIRS features
    graph/<fnirs_id>.json      PFC graph (node and edge features)
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass

import numpy as np

from .ecg import ECG_FEATURE_NAMES, ecg_feature_vector, read_ecg_csv, read_feature_csv, write_feature_csv
from .errors import ValidationError
from .fnirs import (FNIRS_FEATURE_NAMES, build_pfc_graph, extract_fnirs, fnirs_feature_vector,
                    read_fnirs)
from .spectrogram import StftConfig, ecg_spectrogram, read_tensor, write_png, write_tensor
from .synth import dumps_json, load_manifest

log = logging.getLogger(__name__)
INDEX_SCHEMA = 1


def _extract_fnirs_file(root, row):
    rec = read_fnirs(os.path.join(root, row["fnirs"]), os.path.join(root, row["fnirs_sidecar"]))
    betas, fc = extract_fnirs(rec)
    return fnirs_feature_vector(betas, fc), build_pfc_graph(betas, fc)


def extract_dataset(dataset_dir, out_dir, stft_cfg: StftConfig = StftConfig(), png=True):
    """Extract every manifest row; returns the written index.

    Failures are re-raised as :class:`ValidationError` naming the sample.
    """
    manifest = load_manifest(os.path.join(dataset_dir, "manifest.json"))
    for sub in ("ecg", "spec", "fnirs", "graph"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
    rows = []
    done = set()
    for row in manifest["samples"]:
        sid = row["id"]
        fid = os.path.splitext(os.path.basename(row["fnirs"]))[0]
        try:
            if fid not in done:
                vec, graph = _extract_fnirs_file(dataset_dir, row)
                write_feature_csv(os.path.join(out_dir, "fnirs", fid + ".csv"), FNIRS_FEATURE_NAMES, vec)
                with open(os.path.join(out_dir, "graph", fid + ".json"), "w") as fh:
                    fh.write(dumps_json({"node_features": graph.node_features.tolist(),
                                         "edge_index": graph.edge_index.tolist(),
                                         "edge_features": graph.edge_features.tolist()}))
                done.add(fid)
            rec = read_ecg_csv(os.path.join(dataset_dir, row["ecg"]))
            write_feature_csv(os.path.join(out_dir, "ecg", sid + ".csv"), ECG_FEATURE_NAMES,
                              ecg_feature_vector(rec))
            img = ecg_spectrogram(rec, stft_cfg)
            write_tensor(os.path.join(out_dir, "spec", sid + ".f32"), img)
            if png:
                write_png(os.path.join(out_dir, "spec", sid + ".png"), img)
        except (ValueError, OSError) as exc:
            raise ValidationError(f"sample {sid}: {exc}") from exc
        log.debug("extracted %s", sid)
        rows.append({k: row[k] for k in ("id", "subject", "scenario", "task", "label")}
                    | {"fnirs_id": fid})
    index = {"schema": INDEX_SCHEMA, "stft": asdict(stft_cfg),
             "samples": rows}
    with open(os.path.join(out_dir, "index.json"), "w") as fh:
        fh.write(dumps_json(index))
    return index


@dataclass
class FeatureTable:
    ids: np.ndarray
    subject: np.ndarray
    scenario: np.ndarray
    task: np.ndarray
    labels: np.ndarray
    images: np.ndarray
    ecg: np.ndarray
    fnirs: np.ndarray

    def __len__(self):
        return len(self.labels)

    def subset(self, idx):
        idx = np.asarray(idx)
        return FeatureTable(*(getattr(self, f)[idx] for f in self.__dataclass_fields__))

    @classmethod
    def load(cls, features_dir):
        with open(os.path.join(features_dir, "index.json")) as fh:
            index = json.load(fh)
        rows = index["samples"]
        if not rows:
            raise ValidationError(f"{features_dir}: empty feature index")
        fn_cache = {}
        images, ecg, fnirs = [], [], []
        for row in rows:
            sid, fid = row["id"], row["fnirs_id"]
            try:
                images.append(read_tensor(os.path.join(features_dir, "spec", sid + ".f32")))
                ecg.append(read_feature_csv(os.path.join(features_dir, "ecg", sid + ".csv"),
                                            ECG_FEATURE_NAMES))
                if fid not in fn_cache:
                    fn_cache[fid] = read_feature_csv(os.path.join(features_dir, "fnirs", fid + ".csv"),
                                                     FNIRS_FEATURE_NAMES)
            except (ValueError, OSError) as exc:
                raise ValidationError(f"sample {sid}: {exc}") from exc
            fnirs.append(fn_cache[fid])
        col = lambda k: np.array([r[k] for r in rows])  # noqa: E731
        return cls(col("id"), col("subject"), col("scenario"), col("task"), col("label"),
                   np.stack(images).astype(np.float32), np.stack(ecg), np.stack(fnirs))
