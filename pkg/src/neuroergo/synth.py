"""Deterministic synthetic ECG + fNIRS datasets with ground truth.

ECG beats are sums of Gaussian P/Q/R/S/T bumps placed on the sample grid;
the RR tachogram is modulated by LF (0.1 Hz) and HF (0.25 Hz) sinusoids
whose power ratio is a class parameter. fNIRS records hold a rest segment
whose channels share a band-limited latent signal (the coupling sets the
shared variance) followed by three task blocks of HRF-convolved events.

Wave boundaries in the ground truth are the points where a bump falls to
10% of its peak, i.e. ``centre +- sqrt(2 ln 10) * sigma``.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import signal

from .ecg import EcgRecord, write_ecg_csv
from .fnirs import N_CHANNELS, N_TASKS, FnirsRecord, canonical_hrf, write_fnirs

MANIFEST_SCHEMA = 1
SCENARIO_LABEL = {1: 1, 2: 1, 3: 2, 4: 3}
BOUNDARY_K = math.sqrt(2 * math.log(10))

# name: (centre s relative to R, sigma s, amplitude)
WAVES = {
    "P": (-0.16, 0.020, 0.15),
    "Q": (-0.030, 0.008, -0.12),
    "R": (0.0, 0.010, 1.2),
    "S": (0.030, 0.008, -0.25),
    "T": (0.26, 0.045, 0.30),
}
LF_HZ = 0.1
HF_HZ = 0.25


@dataclass(frozen=True)
class ClassParams:
    hr_bpm: float
    lf_hf: float
    beta_amp: tuple
    coupling: float


DEFAULT_CLASS_PARAMS = {
    1: ClassParams(hr_bpm=70.0, lf_hf=1.0, beta_amp=(1.0, 1.0, 1.0), coupling=0.35),
    2: ClassParams(hr_bpm=64.0, lf_hf=0.5, beta_amp=(0.5, 0.5, 0.5), coupling=0.55),
    3: ClassParams(hr_bpm=80.0, lf_hf=3.0, beta_amp=(1.4, 0.9, 0.4), coupling=0.8),
}


@dataclass
class GeneratorConfig:
    n_subjects: int = 26
    scenarios: int = 4
    tasks_per_scenario: int = 3
    fs_ecg: float = 250.0
    fs_fnirs: float = 10.0
    ecg_duration_s: float = 120.0
    rest_s: float = 180.0
    task_block_s: float = 100.0
    events_per_task: int = 8
    ecg_snr_db: float = 20.0
    fnirs_snr: float = 3.0
    subject_hr_sd: float = 5.0
    task_hr_sd: float = 2.0
    separation: float = 1.0
    class_params: dict = field(default_factory=lambda: dict(DEFAULT_CLASS_PARAMS))
    # (subject, scenario) or (subject, scenario, task) entries to leave out
    holes: list = field(default_factory=list)
    seed: int = 0

    def __post_init__(self):
        if self.scenarios != 4:
            raise ValueError("the label mapping is defined for exactly 4 scenarios")
        if self.tasks_per_scenario != N_TASKS:
            raise ValueError(f"fNIRS features assume {N_TASKS} tasks per scenario")
        for name in ("fs_ecg", "fs_fnirs", "ecg_duration_s", "rest_s", "task_block_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        cp = {int(k): (v if isinstance(v, ClassParams) else ClassParams(**v))
              for k, v in self.class_params.items()}
        if sorted(cp) != [1, 2, 3]:
            raise ValueError("class_params needs entries for classes 1, 2, 3")
        if len({(p.hr_bpm, p.lf_hf, tuple(p.beta_amp), p.coupling) for p in cp.values()}) != 3:
            raise ValueError("class parameters must differ across classes")
        self.class_params = cp
        self.holes = [tuple(int(v) for v in h) for h in self.holes]

    def effective_params(self, class_id) -> ClassParams:
        """Class parameters pulled towards the class mean by ``separation``."""
        ps = list(self.class_params.values())
        p = self.class_params[class_id]
        s = self.separation

        def blend(v, mean):
            return mean + s * (v - mean)

        beta_mean = np.mean([q.beta_amp for q in ps], axis=0)
        return ClassParams(
            hr_bpm=blend(p.hr_bpm, np.mean([q.hr_bpm for q in ps])),
            lf_hf=float(np.exp(blend(np.log(p.lf_hf), np.mean([np.log(q.lf_hf) for q in ps])))),
            beta_amp=tuple(float(v) for v in blend(np.asarray(p.beta_amp), beta_mean)),
            coupling=blend(p.coupling, np.mean([q.coupling for q in ps])),
        )

    def to_dict(self):
        d = asdict(self)
        d["class_params"] = {str(k): asdict(v) for k, v in self.class_params.items()}
        d["class_params"] = {k: {**v, "beta_amp": list(v["beta_amp"])} for k, v in d["class_params"].items()}
        d["holes"] = [list(h) for h in self.holes]
        return d


def _rng(*key):
    return np.random.default_rng([int(k) for k in key])


def ecg_template(fs, t_centre_shift=0.0, r_scale=1.0):
    """One beat sampled on ``[-0.35, 0.6]`` s around R (R on a sample)."""
    lo, hi = int(round(-0.35 * fs)), int(round(0.6 * fs))
    t = np.arange(lo, hi + 1) / fs
    y = np.zeros_like(t)
    for name, (c, s, a) in WAVES.items():
        if name == "T":
            c = c + t_centre_shift
        if name in ("Q", "R", "S"):
            a = a * r_scale
        y += a * np.exp(-0.5 * ((t - c) / s) ** 2)
    return lo, y


def beat_landmark_offsets(t_centre_shift=0.0):
    """Ground-truth landmark offsets (s) relative to R."""
    k = BOUNDARY_K
    p, q, s, t = WAVES["P"], WAVES["Q"], WAVES["S"], WAVES["T"]
    tc = t[0] + t_centre_shift
    return {
        "p_onset": p[0] - k * p[1],
        "p_peak": p[0],
        "q_onset": q[0] - k * q[1],
        "q_trough": q[0],
        "s_trough": s[0],
        "s_end": s[0] + k * s[1],
        "t_peak": tc,
        "t_end": tc + k * t[1],
    }


def gen_ecg(class_id=1, seed=0, duration_s=120.0, fs=250.0, *, hr_bpm=None, lf_hf=None,
            mod_amplitude=0.06, jitter_s=0.008, snr_db=20.0, rr_sequence=None, t0=0.5,
            r_scale=1.0, params=None):
    """Synthetic ECG and its ground truth.

    ``hr_bpm``/``lf_hf`` override the class defaults; ``rr_sequence`` (cycled)
    replaces the modulated tachogram entirely; ``snr_db=None`` gives a
    noiseless record with no baseline wander.
    """
    rng = _rng(seed, class_id, 7)
    p = params or DEFAULT_CLASS_PARAMS[class_id]
    hr = p.hr_bpm if hr_bpm is None else hr_bpm
    ratio = p.lf_hf if lf_hf is None else lf_hf
    rr0 = 60.0 / hr
    a_lf = mod_amplitude * math.sqrt(ratio / (1 + ratio))
    a_hf = mod_amplitude * math.sqrt(1 / (1 + ratio))
    ph_lf, ph_hf = rng.uniform(0, 2 * math.pi, 2)

    n = int(round(duration_s * fs))
    beats = []
    t = t0
    k = 0
    while t < duration_s - 0.45:
        beats.append(int(round(t * fs)))
        if rr_sequence is not None:
            rr = rr_sequence[k % len(rr_sequence)]
        else:
            rr = rr0 * (1 + a_lf * math.sin(2 * math.pi * LF_HZ * t + ph_lf)
                        + a_hf * math.sin(2 * math.pi * HF_HZ * t + ph_hf))
            if jitter_s:
                rr += jitter_s * rng.standard_normal()
        t = beats[-1] / fs + rr
        k += 1
    beats = np.asarray(beats, dtype=np.int64)

    mean_rr = float(np.mean(np.diff(beats))) / fs if beats.size > 1 else rr0
    t_shift = 0.2 * (math.sqrt(mean_rr) - 1.0)
    lo, tpl = ecg_template(fs, t_shift, r_scale)
    x = np.zeros(n)
    for b in beats:
        a, z = b + lo, b + lo + tpl.size
        ca, cz = max(a, 0), min(z, n)
        x[ca:cz] += tpl[ca - a: tpl.size - (z - cz)]

    if snr_db is not None:
        p_sig = float(np.mean(x ** 2))
        sigma = math.sqrt(p_sig / 10 ** (snr_db / 10))
        tt = np.arange(n) / fs
        wander = 0.05 * np.sin(2 * math.pi * 0.2 * tt + rng.uniform(0, 2 * math.pi))
        x = x + wander + sigma * rng.standard_normal(n)

    offs = beat_landmark_offsets(t_shift)
    truth = {
        "r_index": beats,
        "r_times_s": beats / fs,
        "landmarks_s": {k: beats / fs + v for k, v in offs.items()},
        "hr_bpm": hr,
        "lf_hf": ratio,
        "mod_lf": a_lf,
        "mod_hf": a_hf,
    }
    return EcgRecord(x, fs), truth


def _band_noise(rng, n, fs, band=(0.01, 0.1)):
    sos = signal.butter(3, band, btype="bandpass", fs=fs, output="sos")
    y = signal.sosfiltfilt(sos, rng.standard_normal(n + 2000))[1000:-1000]
    return y / y.std()


def gen_fnirs(class_id=1, seed=0, fs=10.0, *, rest_s=180.0, block_s=100.0, events_per_task=8,
              snr=3.0, coupling=None, beta_amp=None, channel_gain=None, n_spikes=1, params=None):
    """Synthetic 8-channel HBO record with rest and task segments.

    ``snr`` is the ratio of the task-evoked signal's standard deviation to
    that of the background (shared latent + private channel noise).
    """
    rng = _rng(seed, class_id, 11)
    p = params or DEFAULT_CLASS_PARAMS[class_id]
    c = p.coupling if coupling is None else coupling
    amps = np.asarray(p.beta_amp if beta_amp is None else beta_amp, dtype=np.float64)
    gain = np.ones(N_CHANNELS) if channel_gain is None else np.asarray(channel_gain)

    duration = rest_s + N_TASKS * block_s + 30.0
    n = int(round(duration * fs))
    onsets = []
    for k in range(N_TASKS):
        start = rest_s + k * block_s
        spacing = (block_s - 30.0) / events_per_task
        ev = start + 5.0 + spacing * np.arange(events_per_task) + rng.uniform(0, 3.0, events_per_task)
        onsets.append(np.round(ev * fs) / fs)

    betas = amps[:, None] * gain[None, :]
    hrf = canonical_hrf(fs)
    task = np.zeros((N_CHANNELS, n))
    for k in range(N_TASKS):
        u = np.zeros(n)
        u[np.round(onsets[k] * fs).astype(int)] = 1.0
        reg = np.convolve(u, hrf)[:n]
        task += betas[k][:, None] * reg[None, :]

    latent = _band_noise(rng, n, fs)
    bg = np.vstack([math.sqrt(c) * latent + math.sqrt(1 - c) * _band_noise(rng, n, fs)
                    for _ in range(N_CHANNELS)])
    bg += 0.1 * rng.standard_normal((N_CHANNELS, n))
    task_sd = float(task.std())
    scale = task_sd / snr if snr else 1.0
    x = task + scale * bg

    tt = np.arange(n) / fs
    drift = rng.normal(0, 0.5, (N_CHANNELS, 1)) * (tt / duration) + 0.3 * np.sin(2 * math.pi * 0.003 * tt)
    x = x + scale * drift
    spikes = []
    for _ in range(n_spikes):
        ch, at = int(rng.integers(N_CHANNELS)), int(rng.integers(n // 10, n - n // 10))
        x[ch, at] += 20 * scale * rng.choice([-1.0, 1.0])
        spikes.append((ch, at))

    rest = (0, int(round(rest_s * fs)))
    truth = {"betas": betas, "coupling": c, "spikes": spikes}
    return FnirsRecord(x, fs, tuple(onsets), rest), truth


@dataclass(frozen=True)
class SampleSpec:
    subject: int
    scenario: int
    task: int

    @property
    def label(self):
        return SCENARIO_LABEL[self.scenario]

    @property
    def sample_id(self):
        return f"s{self.subject:02d}_sc{self.scenario}_t{self.task}"

    @property
    def fnirs_id(self):
        return f"s{self.subject:02d}_sc{self.scenario}"


def sample_specs(cfg: GeneratorConfig):
    holes = set(cfg.holes)
    out = []
    for subj in range(1, cfg.n_subjects + 1):
        for sc in range(1, cfg.scenarios + 1):
            if (subj, sc) in holes:
                continue
            for task in range(1, cfg.tasks_per_scenario + 1):
                if (subj, sc, task) not in holes:
                    out.append(SampleSpec(subj, sc, task))
    return out


def _subject_effects(cfg, subject):
    rng = _rng(cfg.seed, subject, 0, 99)
    return {
        "hr_offset": cfg.subject_hr_sd * rng.standard_normal(),
        "r_scale": rng.uniform(0.8, 1.2),
        "channel_gain": 1.0 + 0.2 * rng.standard_normal(N_CHANNELS),
        "coupling_offset": 0.05 * rng.standard_normal(),
    }


def make_ecg(cfg: GeneratorConfig, spec: SampleSpec):
    eff = _subject_effects(cfg, spec.subject)
    p = cfg.effective_params(spec.label)
    rng = _rng(cfg.seed, spec.subject, spec.scenario, spec.task)
    hr = p.hr_bpm + eff["hr_offset"] + cfg.task_hr_sd * rng.standard_normal()
    return gen_ecg(spec.label, int(rng.integers(2 ** 31)), cfg.ecg_duration_s, cfg.fs_ecg,
                   hr_bpm=hr, lf_hf=p.lf_hf, snr_db=cfg.ecg_snr_db, r_scale=eff["r_scale"], params=p)


def make_fnirs(cfg: GeneratorConfig, subject, scenario):
    eff = _subject_effects(cfg, subject)
    label = SCENARIO_LABEL[scenario]
    p = cfg.effective_params(label)
    rng = _rng(cfg.seed, subject, scenario, 0)
    coupling = float(np.clip(p.coupling + eff["coupling_offset"], 0.0, 0.98))
    return gen_fnirs(label, int(rng.integers(2 ** 31)), cfg.fs_fnirs, rest_s=cfg.rest_s,
                     block_s=cfg.task_block_s, events_per_task=cfg.events_per_task,
                     snr=cfg.fnirs_snr, coupling=coupling, channel_gain=eff["channel_gain"], params=p)


def _dump_json(obj, path):
    with open(path, "w") as fh:
        fh.write(dumps_json(obj))


def dumps_json(obj):
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def save_manifest(manifest, path):
    _dump_json(manifest, path)


def load_manifest(path):
    with open(path) as fh:
        return json.load(fh)


def gen_dataset(cfg: GeneratorConfig, out_dir):
    """Write the dataset (CSV/JSON records + ``manifest.json``); returns the manifest."""
    os.makedirs(os.path.join(out_dir, "ecg"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "fnirs"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "truth"), exist_ok=True)
    specs = sample_specs(cfg)
    rows = []
    done_fnirs = set()
    for spec in specs:
        if spec.fnirs_id not in done_fnirs:
            rec, truth = make_fnirs(cfg, spec.subject, spec.scenario)
            write_fnirs(os.path.join(out_dir, "fnirs", spec.fnirs_id + ".csv"),
                        os.path.join(out_dir, "fnirs", spec.fnirs_id + ".json"), rec)
            _dump_json({"betas": truth["betas"].tolist(), "coupling": truth["coupling"],
                        "spikes": [list(s) for s in truth["spikes"]]},
                       os.path.join(out_dir, "truth", spec.fnirs_id + "_fnirs.json"))
            done_fnirs.add(spec.fnirs_id)
        rec, truth = make_ecg(cfg, spec)
        write_ecg_csv(os.path.join(out_dir, "ecg", spec.sample_id + ".csv"), rec)
        _dump_json({"r_index": truth["r_index"].tolist(), "hr_bpm": truth["hr_bpm"],
                    "lf_hf": truth["lf_hf"]},
                   os.path.join(out_dir, "truth", spec.sample_id + "_ecg.json"))
        rows.append({
            "id": spec.sample_id,
            "subject": spec.subject,
            "scenario": spec.scenario,
            "task": spec.task,
            "label": spec.label,
            "ecg": f"ecg/{spec.sample_id}.csv",
            "fnirs": f"fnirs/{spec.fnirs_id}.csv",
            "fnirs_sidecar": f"fnirs/{spec.fnirs_id}.json",
            "truth_ecg": f"truth/{spec.sample_id}_ecg.json",
            "truth_fnirs": f"truth/{spec.fnirs_id}_fnirs.json",
        })
    manifest = {"schema": MANIFEST_SCHEMA, "config": cfg.to_dict(), "samples": rows}
    save_manifest(manifest, os.path.join(out_dir, "manifest.json"))
    return manifest
