"""ECG handcrafted features: filtering, R-peak detection, wave delineation
and the 20-dimensional time/frequency feature vector.

Feature order (``ECG_FEATURE_NAMES``)::

    RR, HR, R_amp, P_amp, QRS_width, PRQ_width, QT, QTC, ST,
    SDNN, RMSSD, SDSD, PNN50,
    VLF, LF, HF, VHF, LF_HF, LF_norm, HF_norm

Intervals are in seconds, HR in beats per minute, PNN50 in percent, band
powers in s^2. Standard deviations use the population convention (divide
by N). Amplitudes are measured against the isoelectric PQ baseline of each
beat.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import signal
from scipy.interpolate import CubicSpline

from . import kernels
from .errors import InsufficientSignalError, ParameterError, ValidationError

log = logging.getLogger(__name__)

ECG_TIME_NAMES = (
    "RR", "HR", "R_amp", "P_amp", "QRS_width", "PRQ_width", "QT", "QTC", "ST",
    "SDNN", "RMSSD", "SDSD", "PNN50",
)
ECG_FREQ_NAMES = ("VLF", "LF", "HF", "VHF", "LF_HF", "LF_norm", "HF_norm")
ECG_FEATURE_NAMES = ECG_TIME_NAMES + ECG_FREQ_NAMES

RR_VALID_RANGE = (0.2, 3.0)
RESAMPLE_HZ = 4.0
WELCH_SEGMENT_S = 60.0
BANDS = {
    "VLF": (0.0, 0.04),
    "LF": (0.04, 0.15),
    "HF": (0.15, 0.4),
    # nominally [0.4, 3] Hz; clipped to the 2 Hz Nyquist of the 4 Hz tachogram
    "VHF": (0.4, RESAMPLE_HZ / 2),
}

# landmark search windows relative to the R peak, seconds
P_WINDOW = (-0.25, -0.08)
Q_WINDOW = (-0.08, 0.0)
S_WINDOW = (0.0, 0.08)
T_WINDOW = (0.12, 0.45)
BASELINE_WINDOW = (-0.10, -0.06)
BOUNDARY_FRACTION = 0.1


@dataclass(frozen=True)
class EcgRecord:
    samples: np.ndarray
    fs: float

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", x)
        if not self.fs > 0:
            raise ValidationError(f"sampling rate must be positive, got {self.fs}")
        if x.ndim != 1 or x.size == 0:
            raise ValidationError("ECG samples must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(x)):
            raise ValidationError("ECG samples contain NaN or Inf")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.fs


@dataclass(frozen=True)
class BeatLandmarks:
    """Per-beat landmark sample indices and amplitudes (one entry per kept beat)."""

    r_index: np.ndarray
    p_onset: np.ndarray
    p_peak: np.ndarray
    q_onset: np.ndarray
    q_trough: np.ndarray
    s_trough: np.ndarray
    s_end: np.ndarray
    t_peak: np.ndarray
    t_end: np.ndarray
    r_amplitude: np.ndarray
    p_amplitude: np.ndarray
    fs: float
    n_dropped: int = 0

    def __len__(self):
        return len(self.r_index)


@dataclass(frozen=True)
class RrSeries:
    intervals_s: np.ndarray
    timestamps_s: np.ndarray
    n_rejected: int = field(default=0)

    def __len__(self):
        return len(self.intervals_s)


def bandpass_filter(record: EcgRecord, lo_hz=0.5, hi_hz=40.0, order=4) -> EcgRecord:
    """Zero-phase Butterworth band-pass (forward-backward)."""
    nyq = record.fs / 2
    if not 0 < lo_hz < hi_hz < nyq:
        raise ParameterError(f"band [{lo_hz}, {hi_hz}] Hz must satisfy 0 < lo < hi < {nyq}")
    sos = signal.butter(order, [lo_hz, hi_hz], btype="bandpass", fs=record.fs, output="sos")
    return EcgRecord(signal.sosfiltfilt(sos, record.samples), record.fs)


def _qrs_energy(x, fs):
    sos = signal.butter(2, [5.0, min(15.0, 0.45 * fs)], btype="bandpass", fs=fs, output="sos")
    y = signal.sosfiltfilt(sos, x)
    d = np.gradient(y) * fs
    width = max(1, int(round(0.150 * fs)))
    return np.convolve(d * d, np.ones(width) / width, mode="same")


def detect_r_peaks(record: EcgRecord) -> np.ndarray:
    """Pan-Tompkins style R-peak detector.

    Band-pass 5-15 Hz, derivative, squaring and a centred 150 ms moving
    integration produce a QRS energy envelope; its local maxima go through
    the adaptive dual-threshold scan, then every accepted beat is snapped
    to the largest sample of ``record`` within +-75 ms.
    """
    fs = record.fs
    if record.duration_s < 5.0:
        raise InsufficientSignalError("R-peak detection needs at least 5 s of ECG")
    x = record.samples
    mwi = _qrs_energy(x, fs)
    refractory = int(round(0.2 * fs))
    if not np.max(mwi) > 0:
        raise InsufficientSignalError("flat ECG: no QRS energy")
    cand, _ = signal.find_peaks(mwi, distance=refractory)
    if cand.size < 2:
        raise InsufficientSignalError("fewer than 2 QRS candidates")
    head = mwi[: int(2 * fs)]
    spki = float(head.max()) / 3.0
    npki = float(head.mean()) / 2.0
    accepted = kernels.pt_threshold_scan(
        np.ascontiguousarray(cand, dtype=np.int64),
        np.ascontiguousarray(mwi[cand], dtype=np.float64),
        refractory, spki, npki,
    )

    half = int(round(0.075 * fs))
    peaks = []
    for idx in accepted:
        lo = max(0, idx - half)
        hi = min(x.size, idx + half + 1)
        r = lo + int(np.argmax(x[lo:hi]))
        if peaks and r - peaks[-1] < refractory:
            if x[r] > x[peaks[-1]]:
                peaks[-1] = r
            continue
        peaks.append(r)
    peaks = np.asarray(peaks, dtype=np.int64)
    if peaks.size < 2:
        raise InsufficientSignalError(f"only {peaks.size} R peak(s) found")
    return peaks


def _walk(x, start, stop, ref, level, sign):
    """Index where ``sign*(x - ref)`` first drops to ``level`` walking from
    ``start`` towards ``stop`` (exclusive); ``stop`` clipped if never reached."""
    if stop > start:
        seg = x[start:stop]
        step = 1
    else:
        seg = x[stop + 1:start + 1][::-1]
        step = -1
    below = np.flatnonzero(sign * (seg - ref) <= level)
    if below.size == 0:
        return stop - step
    return start + step * int(below[0])


def delineate_waves(record: EcgRecord, r_peaks) -> BeatLandmarks:
    """Locate P/Q/S/T landmarks around each R peak.

    Peaks and troughs are extrema inside fixed windows around R; wave
    boundaries (P onset, Q onset, S end, T end) are where the wave falls
    to 10% of its excursion from the PQ baseline. Beats whose search span
    leaves the record, or whose landmarks come out unordered, are dropped.
    """
    x = record.samples
    fs = record.fs
    n = x.size
    r_peaks = np.asarray(r_peaks, dtype=np.int64)

    def off(t):
        return int(round(t * fs))

    keys = ("r_index", "p_onset", "p_peak", "q_onset", "q_trough", "s_trough",
            "s_end", "t_peak", "t_end")
    out = {k: [] for k in keys}
    r_amp, p_amp = [], []
    # broad P/T waves are bounded on a 20 ms moving average
    w = max(1, off(0.02))
    xs = np.convolve(x, np.ones(w) / w, mode="same")
    dropped = 0
    for r in r_peaks:
        r = int(r)
        if r + off(P_WINDOW[0]) < 0 or r + off(T_WINDOW[1]) >= n:
            dropped += 1
            continue
        base = float(np.median(x[r + off(BASELINE_WINDOW[0]): r + off(BASELINE_WINDOW[1]) + 1]))

        p_lo, p_hi = r + off(P_WINDOW[0]), r + off(P_WINDOW[1])
        p_peak = p_lo + int(np.argmax(x[p_lo:p_hi + 1]))
        p_exc = x[p_peak] - base
        pre_base = float(np.min(xs[p_lo:p_peak + 1]))
        p_on = (_walk(xs, p_peak, p_lo - 1, pre_base, BOUNDARY_FRACTION * (xs[p_peak] - pre_base), 1.0)
                if p_exc > 0 else p_peak)

        q_lo = r + off(Q_WINDOW[0])
        q_tr = q_lo + int(np.argmin(x[q_lo:r + 1]))
        q_exc = base - x[q_tr]
        q_on = _walk(x, q_tr, q_lo - 1, base, BOUNDARY_FRACTION * q_exc, -1.0) if q_exc > 0 else q_tr

        s_hi = r + off(S_WINDOW[1])
        s_tr = r + int(np.argmin(x[r:s_hi + 1]))
        s_exc = base - x[s_tr]
        t_lo, t_hi = r + off(T_WINDOW[0]), r + off(T_WINDOW[1])
        s_end = _walk(x, s_tr, t_lo, base, BOUNDARY_FRACTION * s_exc, -1.0) if s_exc > 0 else s_tr

        t_pk = t_lo + int(np.argmax(x[t_lo:t_hi + 1]))
        t_exc = x[t_pk] - base
        post_base = float(np.min(xs[t_pk:t_hi + 1]))
        t_end = (_walk(xs, t_pk, t_hi + 1, post_base, BOUNDARY_FRACTION * (xs[t_pk] - post_base), 1.0)
                 if t_exc > 0 else t_pk)

        if not (p_on < q_on < r < s_tr < t_end and s_tr <= s_end):
            dropped += 1
            continue
        for k, v in zip(keys, (r, p_on, p_peak, q_on, q_tr, s_tr, s_end, t_pk, t_end)):
            out[k].append(v)
        r_amp.append(x[r] - base)
        p_amp.append(p_exc)

    if dropped:
        log.debug("delineation dropped %d of %d beats", dropped, r_peaks.size)
    arrays = {k: np.asarray(v, dtype=np.int64) for k, v in out.items()}
    return BeatLandmarks(
        **arrays,
        r_amplitude=np.asarray(r_amp, dtype=np.float64),
        p_amplitude=np.asarray(p_amp, dtype=np.float64),
        fs=fs,
        n_dropped=dropped,
    )


def rr_series(r_peaks, fs) -> RrSeries:
    """RR tachogram with intervals outside (0.2, 3.0) s rejected."""
    r = np.asarray(r_peaks, dtype=np.float64)
    intervals = np.diff(r) / fs
    stamps = r[:-1] / fs
    keep = (intervals > RR_VALID_RANGE[0]) & (intervals < RR_VALID_RANGE[1])
    n_bad = int(np.count_nonzero(~keep))
    if n_bad:
        log.info("rejected %d RR interval(s) outside %s s", n_bad, RR_VALID_RANGE)
    return RrSeries(intervals[keep], stamps[keep], n_bad)


def time_domain_features(rr: RrSeries, landmarks: BeatLandmarks) -> np.ndarray:
    """The 13 time-domain features in ``ECG_TIME_NAMES`` order."""
    ivals = np.asarray(rr.intervals_s, dtype=np.float64)
    if ivals.size < 2:
        raise InsufficientSignalError("need at least 2 RR intervals")
    fs = landmarks.fs
    mean_rr = float(np.mean(ivals))
    diffs = np.diff(ivals)

    def width(a, b):
        if len(landmarks) == 0:
            return 0.0
        return float(np.mean((b - a) / fs))

    qt = width(landmarks.q_onset, landmarks.t_end)
    out = np.array([
        mean_rr,
        60.0 / mean_rr,
        float(np.mean(landmarks.r_amplitude)) if len(landmarks) else 0.0,
        float(np.mean(landmarks.p_amplitude)) if len(landmarks) else 0.0,
        width(landmarks.q_onset, landmarks.s_end),
        width(landmarks.p_onset, landmarks.q_onset),
        qt,
        qt / np.sqrt(mean_rr),
        width(landmarks.s_trough, landmarks.t_end),
        float(np.std(ivals)),
        float(np.sqrt(np.mean(diffs ** 2))),
        float(np.std(diffs)),
        100.0 * float(np.count_nonzero(np.abs(diffs) > 0.05)) / diffs.size,
    ])
    return out


def _ratio(num, den):
    return num / den if den > 0 else 0.0


def rr_psd(rr: RrSeries):
    """Welch PSD of the mean-removed, cubic-resampled 4 Hz tachogram."""
    t = np.asarray(rr.timestamps_s, dtype=np.float64)
    v = np.asarray(rr.intervals_s, dtype=np.float64)
    if t.size < 4 or t[-1] + v[-1] - t[0] < WELCH_SEGMENT_S:
        raise InsufficientSignalError("frequency-domain HRV needs at least 60 s of RR data")
    n = int(np.floor((t[-1] - t[0]) * RESAMPLE_HZ)) + 1
    grid = t[0] + np.arange(n) / RESAMPLE_HZ
    y = CubicSpline(t, v)(grid)
    y = y - y.mean()
    nperseg = min(int(WELCH_SEGMENT_S * RESAMPLE_HZ), y.size)
    f, p = signal.welch(y, fs=RESAMPLE_HZ, window="hann", nperseg=nperseg,
                        noverlap=nperseg // 2, detrend=False, scaling="density")
    return f, p


def frequency_domain_features(rr: RrSeries) -> np.ndarray:
    """The 7 frequency-domain features in ``ECG_FREQ_NAMES`` order."""
    f, p = rr_psd(rr)
    df = f[1] - f[0]
    powers = {}
    for name, (lo, hi) in BANDS.items():
        if name == "VHF":
            mask = (f >= lo) & (f <= hi)
        else:
            mask = (f >= lo) & (f < hi)
        powers[name] = float(np.sum(p[mask]) * df)
    vlf, lf, hf, vhf = powers["VLF"], powers["LF"], powers["HF"], powers["VHF"]
    total = vlf + lf + hf
    return np.array([vlf, lf, hf, vhf, _ratio(lf, hf), _ratio(lf, total), _ratio(hf, total)])


def ecg_feature_vector(record: EcgRecord) -> np.ndarray:
    """Full 20-feature vector of a raw ECG record."""
    filtered = bandpass_filter(record, 0.5, 40.0)
    peaks = detect_r_peaks(filtered)
    marks = delineate_waves(filtered, peaks)
    rr = rr_series(peaks, record.fs)
    return np.concatenate([time_domain_features(rr, marks), frequency_domain_features(rr)])


def read_ecg_csv(path) -> EcgRecord:
    """Load a ``t_s,value`` CSV; the sampling grid must be uniform to 1 ppm."""
    with open(path) as fh:
        header = fh.readline().strip()
    if header.replace(" ", "") != "t_s,value":
        raise ValidationError(f"{path}: expected header 't_s,value', got {header!r}")
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise ValidationError(f"{path}: unreadable row ({exc})") from exc
    if data.shape[1] != 2 or data.shape[0] < 2:
        raise ValidationError(f"{path}: need at least two rows of two columns")
    if not np.all(np.isfinite(data)):
        raise ValidationError(f"{path}: non-finite values")
    dt = np.diff(data[:, 0])
    step = float(np.median(dt))
    if not step > 0 or np.max(np.abs(dt - step)) > 1e-6 * step:
        raise ValidationError(f"{path}: sampling grid is not uniform to 1 ppm")
    # rate from the whole span; rounding drops the text-format error
    fs = round((data.shape[0] - 1) / (data[-1, 0] - data[0, 0]), 6)
    return EcgRecord(data[:, 1], fs)


def write_ecg_csv(path, record: EcgRecord):
    t = np.arange(record.samples.size) / record.fs
    np.savetxt(path, np.column_stack([t, record.samples]), delimiter=",",
               header="t_s,value", comments="", fmt=("%.9f", "%.9g"))


def write_feature_csv(path, names, values):
    values = np.asarray(values, dtype=np.float64)
    if len(names) != values.size:
        raise ValueError("feature names and values differ in length")
    with open(path, "w") as fh:
        fh.write(",".join(names) + "\n")
        fh.write(",".join(repr(float(v)) for v in values) + "\n")


def read_feature_csv(path, names=None) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        row = fh.readline().strip().split(",")
    if names is not None and tuple(header) != tuple(names):
        raise ValidationError(f"{path}: unexpected feature schema")
    try:
        vals = np.array([float(v) for v in row])
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    if vals.size != len(header):
        raise ValidationError(f"{path}: row length does not match header")
    return vals
