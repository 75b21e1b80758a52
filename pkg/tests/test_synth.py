import json

import numpy as np
import pytest

from neuroergo.ecg import read_ecg_csv
from neuroergo.fnirs import read_fnirs
from neuroergo.synth import SCENARIO_LABEL, GeneratorConfig, gen_dataset, gen_ecg, load_manifest, sample_specs


def test_default_manifest_counts():
    specs = sample_specs(GeneratorConfig())
    assert len(specs) == 26 * 4 * 3 == 312
    labels = np.array([s.label for s in specs])
    assert [int(np.sum(labels == c)) for c in (1, 2, 3)] == [156, 78, 78]
    assert SCENARIO_LABEL == {1: 1, 2: 1, 3: 2, 4: 3}
    assert len({s.sample_id for s in specs}) == 312


def test_holes_are_skipped():
    cfg = GeneratorConfig(n_subjects=2, holes=[(1, 2), (2, 4, 3)])
    ids = {s.sample_id for s in sample_specs(cfg)}
    assert len(ids) == 24 - 3 - 1
    assert "s01_sc2_t1" not in ids and "s02_sc4_t3" not in ids


def test_config_validation():
    with pytest.raises(ValueError):
        GeneratorConfig(scenarios=3)
    with pytest.raises(ValueError):
        GeneratorConfig(fs_ecg=0)
    same = {c: {"hr_bpm": 70, "lf_hf": 1.0, "beta_amp": [1, 1, 1], "coupling": 0.3} for c in (1, 2, 3)}
    with pytest.raises(ValueError):
        GeneratorConfig(class_params=same)


def test_dataset_round_trip(tmp_path):
    cfg = GeneratorConfig(n_subjects=1, ecg_duration_s=30.0, seed=4)
    manifest = gen_dataset(cfg, tmp_path)
    assert len(manifest["samples"]) == 12
    assert load_manifest(tmp_path / "manifest.json") == json.loads(json.dumps(manifest))
    row = manifest["samples"][0]
    rec = read_ecg_csv(tmp_path / row["ecg"])
    assert rec.fs == 250.0 and rec.samples.size == 30 * 250
    fn = read_fnirs(tmp_path / row["fnirs"], tmp_path / row["fnirs_sidecar"])
    assert fn.hbo.shape[0] == 8 and fn.fs == 10.0
    truth = json.loads((tmp_path / row["truth_ecg"]).read_text())
    assert truth["r_index"] == sorted(truth["r_index"])


def test_generator_determinism():
    a, _ = gen_ecg(2, seed=5, duration_s=20.0)
    b, _ = gen_ecg(2, seed=5, duration_s=20.0)
    c, _ = gen_ecg(2, seed=6, duration_s=20.0)
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)
