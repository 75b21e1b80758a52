"""STFT spectrogram images of ECG records (the CNN input).

The power matrix keeps one-sided periodogram bins up to 3 Hz. Rendering
maps power to decibels relative to the image maximum (floored at -80 dB),
min-max scales, looks up a fixed 256-entry colour ramp and resizes
bilinearly to 3 x 64 x 64. Row 0 of the image is the highest frequency.

Byte layouts
------------
``.png``  8-bit RGB, 64 x 64.
``.f32``  raw little-endian float32, C order, shape (3, 64, 64).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal.windows import kaiser

from .ecg import EcgRecord
from .errors import InsufficientSignalError, ParameterError

IMAGE_SIZE = 64
DB_FLOOR = -80.0

# 256-entry dark-blue to yellow perceptual ramp (viridis), RGB hex triplets.
_RAMP_HEX = (
    "44015444025645045745055946075a46085c460a5d460b5e470d60470e61471063471164471365481467481668481769"
    "48186a481a6c481b6d481c6e481d6f481f70482071482173482374482475482576482677482878482979472a7a472c7a"
    "472d7b472e7c472f7d46307e46327e46337f463480453581453781453882443983443a83443b84433d84433e85423f85"
    "4240864241864142874144874045884046883f47883f48893e49893e4a893e4c8a3d4d8a3d4e8a3c4f8a3c508b3b518b"
    "3b528b3a538b3a548c39558c39568c38588c38598c375a8c375b8d365c8d365d8d355e8d355f8d34608d34618d33628d"
    "33638d32648e32658e31668e31678e31688e30698e306a8e2f6b8e2f6c8e2e6d8e2e6e8e2e6f8e2d708e2d718e2c718e"
    "2c728e2c738e2b748e2b758e2a768e2a778e2a788e29798e297a8e297b8e287c8e287d8e277e8e277f8e27808e26818e"
    "26828e26828e25838e25848e25858e24868e24878e23888e23898e238a8d228b8d228c8d228d8d218e8d218f8d21908d"
    "21918c20928c20928c20938c1f948c1f958b1f968b1f978b1f988b1f998a1f9a8a1e9b8a1e9c891e9d891f9e891f9f88"
    "1fa0881fa1881fa1871fa28720a38620a48621a58521a68522a78522a88423a98324aa8325ab8225ac8226ad8127ad81"
    "28ae8029af7f2ab07f2cb17e2db27d2eb37c2fb47c31b57b32b67a34b67935b77937b87838b9773aba763bbb753dbc74"
    "3fbc7340bd7242be7144bf7046c06f48c16e4ac16d4cc26c4ec36b50c46a52c56954c56856c66758c7655ac8645cc863"
    "5ec96260ca6063cb5f65cb5e67cc5c69cd5b6ccd5a6ece5870cf5773d05675d05477d1537ad1517cd2507fd34e81d34d"
    "84d44b86d54989d5488bd6468ed64590d74393d74195d84098d83e9bd93c9dd93ba0da39a2da37a5db36a8db34aadc32"
    "addc30b0dd2fb2dd2db5de2bb8de29bade28bddf26c0df25c2df23c5e021c8e020cae11fcde11dd0e11cd2e21bd5e21a"
    "d8e219dae319dde318dfe318e2e418e5e419e7e419eae51aece51befe51cf1e51df4e61ef6e620f8e621fbe723fde725"
)
COLORMAP = (np.frombuffer(bytes.fromhex("".join(_RAMP_HEX)), dtype=np.uint8)
            .reshape(256, 3).astype(np.float64) / 255.0)


@dataclass(frozen=True)
class StftConfig:
    f_max_hz: float = 3.0
    freq_resolution_hz: float = 0.5
    overlap_fraction: float = 0.2
    leakage: float = 0.875

    def __post_init__(self):
        if not 0 <= self.overlap_fraction < 1:
            raise ParameterError("overlap_fraction must be in [0, 1)")
        if not 0 < self.leakage <= 1:
            raise ParameterError("leakage must be in (0, 1]")
        if self.freq_resolution_hz <= 0 or self.f_max_hz <= 0:
            raise ParameterError("frequency settings must be positive")

    @property
    def kaiser_beta(self):
        """Leakage 1 is a rectangular window; lower values taper harder."""
        return 40.0 * (1.0 - self.leakage)

    def window_length(self, fs):
        return int(round(fs / self.freq_resolution_hz))

    def hop(self, fs):
        return max(1, int(round(self.window_length(fs) * (1.0 - self.overlap_fraction))))


@dataclass(frozen=True)
class PowerMatrix:
    power: np.ndarray
    freqs_hz: np.ndarray
    times_pct: np.ndarray


def power_spectrogram(x, fs, cfg: StftConfig = StftConfig(), f_max_hz=None) -> PowerMatrix:
    """One-sided power per frame and bin, scaled so that with a rectangular
    window the bins of a frame sum to the frame's energy."""
    x = np.asarray(x, dtype=np.float64)
    n = cfg.window_length(fs)
    if x.size < n or n < 2:
        raise InsufficientSignalError(f"{x.size} samples is shorter than one {n}-sample window")
    hop = cfg.hop(fs)
    n_frames = 1 + (x.size - n) // hop
    frames = np.lib.stride_tricks.sliding_window_view(x, n)[::hop][:n_frames]
    win = kaiser(n, cfg.kaiser_beta, sym=False)
    spec = np.abs(np.fft.rfft(frames * win, axis=1)) ** 2 / n
    spec[:, 1:(n + 1) // 2] *= 2
    freqs = np.fft.rfftfreq(n, 1.0 / fs)
    if f_max_hz is not None:
        keep = freqs <= f_max_hz + 1e-9
        spec, freqs = spec[:, keep], freqs[keep]
    centres = (np.arange(n_frames) * hop + n / 2) / x.size * 100.0
    return PowerMatrix(np.ascontiguousarray(spec.T), freqs, centres)


def stft(record: EcgRecord, cfg: StftConfig = StftConfig()) -> PowerMatrix:
    """Windowed power matrix of ``record`` restricted to ``[0, f_max]`` Hz,
    with the time axis in percent of the record."""
    return power_spectrogram(record.samples, record.fs, cfg, cfg.f_max_hz)


def _linear_index(n_in, n_out):
    """Source indices and fractions for bilinear resampling, half-pixel centres."""
    pos = np.clip((np.arange(n_out) + 0.5) * n_in / n_out - 0.5, 0, n_in - 1)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, pos - lo


def resize_bilinear(img, size=IMAGE_SIZE):
    """Resize ``(c, h, w)`` to ``(c, size, size)``. Written as
    ``a + f * (b - a)`` so constant regions stay exactly constant."""
    lo, hi, f = _linear_index(img.shape[1], size)
    rows = img[:, lo, :] + f[None, :, None] * (img[:, hi, :] - img[:, lo, :])
    lo, hi, f = _linear_index(img.shape[2], size)
    return rows[:, :, lo] + f[None, None, :] * (rows[:, :, hi] - rows[:, :, lo])


def colormap_indices(power):
    """Integer ramp index per bin after dB conversion and min-max scaling."""
    p = np.asarray(power, dtype=np.float64)
    if p.size == 0:
        raise ParameterError("empty power matrix")
    peak = p.max()
    if peak <= 0:
        return np.zeros(p.shape, dtype=np.intp)
    with np.errstate(divide="ignore"):
        db = np.maximum(10.0 * np.log10(p / peak), DB_FLOOR)
    lo, hi = db.min(), db.max()
    if hi == lo:
        return np.zeros(p.shape, dtype=np.intp)
    return np.rint((db - lo) / (hi - lo) * 255).astype(np.intp)


def render_spectrogram(pm: PowerMatrix, size=IMAGE_SIZE) -> np.ndarray:
    """Float image ``(3, size, size)`` in [0, 1]."""
    idx = colormap_indices(pm.power)[::-1]
    rgb = COLORMAP[idx].transpose(2, 0, 1)
    return np.clip(resize_bilinear(rgb, size), 0.0, 1.0)


def ecg_spectrogram(record: EcgRecord, cfg: StftConfig = StftConfig()) -> np.ndarray:
    return render_spectrogram(stft(record, cfg))


def write_png(path, image):
    from PIL import Image

    arr = np.rint(np.clip(image, 0, 1) * 255).astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def write_tensor(path, image):
    np.ascontiguousarray(image, dtype="<f4").tofile(path)


def read_tensor(path, shape=(3, IMAGE_SIZE, IMAGE_SIZE)):
    data = np.fromfile(path, dtype="<f4")
    if data.size != int(np.prod(shape)):
        raise ParameterError(f"{path}: expected {np.prod(shape)} float32 values, found {data.size}")
    return data.reshape(shape)
