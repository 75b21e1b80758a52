"""fNIRS features: preprocessing, GLM activation betas, functional
connectivity and the prefrontal-cortex graph.

The 136-dim feature vector is laid out as::

    [0:24]    betas, task-major: beta[task0, ch0..ch7], beta[task1, ...], ...
    [24:52]   pearson   over channel pairs (i<j, row-major upper triangle)
    [52:80]   fisher-z  over the same pairs
    [80:108]  coherence over the same pairs
    [108:136] PLV       over the same pairs
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from itertools import combinations

import numpy as np
from scipy import signal, stats
from scipy.interpolate import CubicSpline
from scipy.ndimage import median_filter

from .errors import (
    DegenerateDesignError,
    DegenerateSignalError,
    InsufficientSignalError,
    ParameterError,
    ValidationError,
)

N_CHANNELS = 8
N_TASKS = 3
FC_METRICS = ("pearson", "fisher_z", "coherence", "plv")
PAIRS = tuple(combinations(range(N_CHANNELS), 2))
N_FEATURES = N_TASKS * N_CHANNELS + len(FC_METRICS) * len(PAIRS)
PASS_BAND = (0.01, 0.1)
SPIKE_Z = 5.0
SPIKE_WINDOW_S = 2.0
# |r| is clipped here before atanh so identical channels stay finite
FISHER_CLIP = 0.999999

FNIRS_FEATURE_NAMES = tuple(
    [f"beta_t{k + 1}_ch{c + 1}" for k in range(N_TASKS) for c in range(N_CHANNELS)]
    + [f"{m}_ch{i + 1}_ch{j + 1}" for m in FC_METRICS for i, j in PAIRS]
)


@dataclass(frozen=True)
class FnirsRecord:
    """Eight-channel HBO recording.

    ``event_onsets`` holds one array of onset times (seconds) per task;
    ``rest_segment`` is a ``(start, stop)`` sample range.
    """

    hbo: np.ndarray
    fs: float
    event_onsets: tuple
    rest_segment: tuple
    preprocessed: bool = False

    def __post_init__(self):
        hbo = np.asarray(self.hbo, dtype=np.float64)
        object.__setattr__(self, "hbo", hbo)
        object.__setattr__(self, "event_onsets",
                           tuple(np.asarray(e, dtype=np.float64) for e in self.event_onsets))
        object.__setattr__(self, "rest_segment", (int(self.rest_segment[0]), int(self.rest_segment[1])))
        if hbo.ndim != 2 or hbo.shape[0] != N_CHANNELS:
            raise ValidationError(f"expected {N_CHANNELS} channels, got shape {hbo.shape}")
        if not self.fs > 0.2:
            raise ValidationError(f"fNIRS sampling rate must exceed 0.2 Hz, got {self.fs}")
        if not np.all(np.isfinite(hbo)):
            raise ValidationError("HBO data contain NaN or Inf")
        dur = hbo.shape[1] / self.fs
        for onsets in self.event_onsets:
            if onsets.size and (onsets.min() < 0 or onsets.max() >= dur):
                raise ValidationError("event onset outside the record")
        a, b = self.rest_segment
        if not 0 <= a < b <= hbo.shape[1]:
            raise ValidationError(f"rest segment {self.rest_segment} outside the record")

    @property
    def n_samples(self):
        return self.hbo.shape[1]


def _bandpass(x, fs, band=PASS_BAND, order=3):
    sos = signal.butter(order, band, btype="bandpass", fs=fs, output="sos")
    return signal.sosfiltfilt(sos, x, axis=-1)


def remove_spikes(x, fs, z_thresh=SPIKE_Z, window_s=SPIKE_WINDOW_S):
    """Replace spike samples by cubic interpolation.

    A sample is a spike when its deviation from the 2 s running median
    exceeds ``z_thresh`` robust standard deviations (MAD based, estimated
    over the whole channel). Flags are widened by one sample each side.
    """
    x = np.asarray(x, dtype=np.float64)
    width = max(3, int(round(window_s * fs)) | 1)
    resid = x - median_filter(x, size=width, mode="nearest")
    mad = np.median(np.abs(resid - np.median(resid)))
    if mad == 0:
        return x.copy()
    z = resid / (1.4826 * mad)
    bad = np.abs(z) > z_thresh
    if not bad.any():
        return x.copy()
    bad = bad | np.roll(bad, 1) | np.roll(bad, -1)
    good = np.flatnonzero(~bad)
    if good.size < 4:
        return x.copy()
    out = x.copy()
    idx = np.flatnonzero(bad)
    out[idx] = CubicSpline(good, x[good])(idx)
    return out


def fnirs_preprocess(record: FnirsRecord, band=PASS_BAND) -> FnirsRecord:
    """Linear detrend, spike correction, then zero-phase band-pass, per channel."""
    if record.n_samples < 60 * record.fs:
        raise InsufficientSignalError("fNIRS preprocessing needs at least 60 s")
    x = signal.detrend(record.hbo, axis=1, type="linear")
    x = np.vstack([remove_spikes(ch, record.fs) for ch in x])
    x = _bandpass(x, record.fs, band)
    return replace(record, hbo=x, preprocessed=True)


def canonical_hrf(fs, duration_s=32.0):
    """Double-gamma HRF with its peak at 6 s and undershoot at 16 s.

    Gamma shapes are chosen so the modes fall at 6 s and 16 s (unit scale);
    the undershoot is 1/6 of the peak lobe. Normalised to unit maximum.
    """
    t = np.arange(0.0, duration_s, 1.0 / fs)
    h = stats.gamma.pdf(t, 7.0) - stats.gamma.pdf(t, 17.0) / 6.0
    return h / h.max()


def design_matrix(record: FnirsRecord) -> np.ndarray:
    """``T x 4`` design: three HRF-convolved task regressors and an intercept.

    For a preprocessed record the task regressors go through the same
    detrend and band-pass as the data, so the betas stay unbiased.
    """
    n = record.n_samples
    hrf = canonical_hrf(record.fs)
    cols = []
    for onsets in record.event_onsets:
        u = np.zeros(n)
        idx = np.clip(np.round(onsets * record.fs).astype(int), 0, n - 1)
        np.add.at(u, idx, 1.0)
        cols.append(np.convolve(u, hrf)[:n])
    reg = np.vstack(cols)
    if record.preprocessed:
        reg = _bandpass(signal.detrend(reg, axis=1, type="linear"), record.fs)
    return np.column_stack([reg.T, np.ones(n)])


def glm_betas(record: FnirsRecord) -> np.ndarray:
    """Per-channel OLS task coefficients, shape ``(3, 8)``."""
    if len(record.event_onsets) != N_TASKS or any(e.size == 0 for e in record.event_onsets):
        raise DegenerateDesignError("every task needs at least one event")
    X = design_matrix(record)
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise DegenerateDesignError("design matrix is rank deficient")
    coef, *_ = np.linalg.lstsq(X, record.hbo.T, rcond=None)
    return coef[:N_TASKS]


def pearson(x, y) -> float:
    """Correlation of the z-scored signals, i.e. mean of their product."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.size < 2:
        raise ParameterError("pearson needs two equal-length sequences of length >= 2")
    sx, sy = x.std(), y.std()
    if sx == 0 or sy == 0:
        raise DegenerateSignalError("zero-variance input to pearson")
    r = float(np.mean(((x - x.mean()) / sx) * ((y - y.mean()) / sy)))
    return min(1.0, max(-1.0, r))


def fisher_z(r) -> float:
    if not abs(r) < 1:
        raise ParameterError(f"fisher_z needs |r| < 1, got {r}")
    return float(np.arctanh(r))


def _welch_segments(n, n_segments):
    nperseg = (2 * n) // (n_segments + 1)
    step = nperseg - nperseg // 2
    count = (n - nperseg) // step + 1 if nperseg > 0 else 0
    return nperseg, step, count


def coherence_spectrum(x, y, fs, n_segments=8):
    """Welch magnitude-squared coherence (Hann, 50% overlap).

    The segment length is chosen so ``n_segments`` segments fit the record.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ParameterError("coherence needs equal-length inputs")
    nperseg, step, count = _welch_segments(x.size, n_segments)
    if nperseg < 8 or count < 4:
        raise InsufficientSignalError("coherence needs at least 4 Welch segments")
    win = signal.get_window("hann", nperseg)
    sxx = np.zeros(nperseg // 2 + 1)
    syy = np.zeros_like(sxx)
    sxy = np.zeros_like(sxx, dtype=np.complex128)
    for k in range(count):
        a = x[k * step: k * step + nperseg]
        b = y[k * step: k * step + nperseg]
        fa = np.fft.rfft(win * (a - a.mean()))
        fb = np.fft.rfft(win * (b - b.mean()))
        sxx += np.abs(fa) ** 2
        syy += np.abs(fb) ** 2
        sxy += fa * np.conj(fb)
    den = sxx * syy
    coh = np.zeros_like(sxx)
    ok = den > 0
    coh[ok] = np.abs(sxy[ok]) ** 2 / den[ok]
    freqs = np.fft.rfftfreq(nperseg, 1.0 / fs)
    return freqs, np.clip(coh, 0.0, 1.0), nperseg


def coherence(x, y, fs, band=PASS_BAND, n_segments=8) -> float:
    """Magnitude-squared coherence averaged over ``band``."""
    freqs, coh, _ = coherence_spectrum(x, y, fs, n_segments)
    mask = (freqs >= band[0]) & (freqs <= band[1])
    if not mask.any():
        raise InsufficientSignalError(f"record too short to resolve {band} Hz")
    return float(np.mean(coh[mask]))


def analytic_signal(x):
    """Analytic signal via the one-sided spectrum."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    h = np.zeros(n)
    if n % 2 == 0:
        h[0] = h[n // 2] = 1.0
        h[1:n // 2] = 2.0
    else:
        h[0] = 1.0
        h[1:(n + 1) // 2] = 2.0
    return np.fft.ifft(np.fft.fft(x) * h)


def analytic_phase(x):
    """Instantaneous phase in (-pi, pi]."""
    return np.angle(analytic_signal(x))


def plv(x, y, trim=0.0) -> float:
    """Phase-locking value; ``trim`` drops that fraction of samples at each edge."""
    dphi = analytic_phase(x) - analytic_phase(y)
    k = int(trim * dphi.size)
    if k:
        dphi = dphi[k:-k]
    return float(min(1.0, np.abs(np.mean(np.exp(1j * dphi)))))


@dataclass(frozen=True)
class FcSet:
    pearson: np.ndarray
    fisher_z: np.ndarray
    coherence: np.ndarray
    plv: np.ndarray

    def as_tuple(self):
        return tuple(getattr(self, m) for m in FC_METRICS)


def fc_set(record: FnirsRecord) -> FcSet:
    """Pairwise connectivity over the rest segment."""
    a, b = record.rest_segment
    rest = record.hbo[:, a:b]
    mats = {m: np.eye(N_CHANNELS) for m in FC_METRICS}
    mats["fisher_z"] *= np.arctanh(FISHER_CLIP)
    for i, j in PAIRS:
        r = pearson(rest[i], rest[j])
        vals = (
            r,
            fisher_z(min(FISHER_CLIP, max(-FISHER_CLIP, r))),
            coherence(rest[i], rest[j], record.fs),
            plv(rest[i], rest[j]),
        )
        for m, v in zip(FC_METRICS, vals):
            mats[m][i, j] = mats[m][j, i] = v
    return FcSet(**mats)


@dataclass(frozen=True)
class PfcGraph:
    """Complete graph over the 8 channels, edges in canonical ``(i<j)`` order."""

    node_features: np.ndarray  # (8, 3)
    edge_features: np.ndarray  # (28, 4)

    @property
    def edge_index(self):
        return np.asarray(PAIRS, dtype=np.int64)

    @property
    def n_nodes(self):
        return self.node_features.shape[0]

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.node_features.T.ravel(), self.edge_features.T.ravel()])

    @classmethod
    def from_vector(cls, vec):
        vec = np.asarray(vec)
        if vec.shape[-1] != N_FEATURES:
            raise ParameterError(f"expected {N_FEATURES} features, got {vec.shape[-1]}")
        nb = N_TASKS * N_CHANNELS
        nodes = vec[:nb].reshape(N_TASKS, N_CHANNELS).T
        edges = vec[nb:].reshape(len(FC_METRICS), len(PAIRS)).T
        return cls(np.ascontiguousarray(nodes), np.ascontiguousarray(edges))


def build_pfc_graph(betas, fc: FcSet) -> PfcGraph:
    betas = np.asarray(betas, dtype=np.float64)
    if betas.shape != (N_TASKS, N_CHANNELS):
        raise ParameterError(f"betas must be {N_TASKS}x{N_CHANNELS}")
    iu = tuple(np.asarray(PAIRS).T)
    edges = np.column_stack([m[iu] for m in fc.as_tuple()])
    return PfcGraph(betas.T.copy(), edges)


def fnirs_feature_vector(betas, fc: FcSet) -> np.ndarray:
    return build_pfc_graph(betas, fc).flatten()


def extract_fnirs(record: FnirsRecord):
    """Preprocess and return ``(betas, fc)`` for a raw record."""
    pre = fnirs_preprocess(record)
    return glm_betas(pre), fc_set(pre)


def read_fnirs(csv_path, sidecar_path) -> FnirsRecord:
    """Load ``t_s,ch1..ch8`` CSV plus its JSON sidecar."""
    with open(csv_path) as fh:
        header = fh.readline().strip().replace(" ", "").split(",")
    expected = ["t_s"] + [f"ch{c + 1}" for c in range(N_CHANNELS)]
    if header != expected:
        raise ValidationError(f"{csv_path}: expected header {','.join(expected)}")
    try:
        data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise ValidationError(f"{csv_path}: unreadable row ({exc})") from exc
    if data.shape[1] != N_CHANNELS + 1:
        raise ValidationError(f"{csv_path}: wrong column count")
    with open(sidecar_path) as fh:
        meta = json.load(fh)
    dt = np.diff(data[:, 0])
    step = float(np.median(dt))
    if not step > 0 or np.max(np.abs(dt - step)) > 1e-6 * step:
        raise ValidationError(f"{csv_path}: sampling grid is not uniform to 1 ppm")
    fs = 1.0 / step
    if abs(fs - meta["fs"]) > 1e-6 * meta["fs"]:
        raise ValidationError(f"{csv_path}: sampling rate disagrees with sidecar")
    r0, r1 = meta["rest_segment_s"]
    rest = (int(round(r0 * meta["fs"])), int(round(r1 * meta["fs"])))
    try:
        return FnirsRecord(data[:, 1:].T, meta["fs"], tuple(meta["event_onsets_s"]), rest)
    except ValidationError as exc:
        raise ValidationError(f"{csv_path}: {exc}") from exc


def write_fnirs(csv_path, sidecar_path, record: FnirsRecord):
    t = np.arange(record.n_samples) / record.fs
    header = ",".join(["t_s"] + [f"ch{c + 1}" for c in range(N_CHANNELS)])
    np.savetxt(csv_path, np.column_stack([t, record.hbo.T]), delimiter=",",
               header=header, comments="", fmt=["%.9f"] + ["%.9g"] * N_CHANNELS)
    meta = {
        "fs": record.fs,
        "event_onsets_s": [[float(v) for v in e] for e in record.event_onsets],
        "rest_segment_s": [record.rest_segment[0] / record.fs, record.rest_segment[1] / record.fs],
    }
    with open(sidecar_path, "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")
