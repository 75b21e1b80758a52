import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from neuroergo.ecg import EcgRecord
from neuroergo.errors import InsufficientSignalError, ParameterError
from neuroergo.spectrogram import (COLORMAP, PowerMatrix, StftConfig, colormap_indices, ecg_spectrogram,
                                   power_spectrogram, read_tensor, render_spectrogram, stft, write_png,
                                   write_tensor)
from neuroergo.synth import gen_ecg

FS = 250.0


def test_config_defaults_and_window():
    cfg = StftConfig()
    assert cfg.window_length(FS) == 500
    assert cfg.hop(FS) == 400
    assert cfg.kaiser_beta == pytest.approx(5.0)
    with pytest.raises(ParameterError):
        StftConfig(overlap_fraction=1.0)
    with pytest.raises(ParameterError):
        StftConfig(leakage=0.0)


def test_sine_peak_at_1hz():
    t = np.arange(300 * int(FS)) / FS
    pm = stft(EcgRecord(np.sin(2 * np.pi * t), FS))
    assert pm.freqs_hz[np.argmax(pm.power.mean(axis=1))] == pytest.approx(1.0)
    assert pm.freqs_hz.max() <= 3.0
    assert 0 <= pm.times_pct.min() and pm.times_pct.max() <= 100


def test_zero_signal():
    pm = stft(EcgRecord(np.zeros(int(30 * FS)), FS))
    assert np.all(pm.power == 0)


def test_chirp_argmax_non_decreasing():
    t = np.arange(300 * int(FS)) / FS
    x = np.sin(2 * np.pi * (0.5 * t + (2.0 / 600.0) * t ** 2))
    pm = stft(EcgRecord(x, FS))
    assert np.all(np.diff(pm.freqs_hz[pm.power.argmax(axis=0)]) >= 0)


def test_too_short():
    with pytest.raises(InsufficientSignalError):
        stft(EcgRecord(np.ones(100), FS))


def test_parseval_rectangular():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(500 * 40)
    pm = power_spectrogram(x, FS, StftConfig(leakage=1.0, overlap_fraction=0.0))
    assert abs(pm.power.sum() / np.sum(x ** 2) - 1) < 0.01


def test_render_constant_and_shape():
    img = render_spectrogram(PowerMatrix(np.full((7, 30), 2.5), np.arange(7) * 0.5, np.linspace(0, 100, 30)))
    assert img.shape == (3, 64, 64)
    assert np.all(img.reshape(3, -1).var(axis=1) == 0)


def test_render_scale_invariant():
    rng = np.random.default_rng(1)
    p = rng.gamma(1.0, 1.0, (7, 50))
    a = render_spectrogram(PowerMatrix(p, np.arange(7) * 0.5, np.arange(50)))
    b = render_spectrogram(PowerMatrix(p * 1234.5, np.arange(7) * 0.5, np.arange(50)))
    assert np.max(np.abs(a - b)) <= 1e-6


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 1e6), min_size=4, max_size=60))
def test_colormap_index_monotone(vals):
    p = np.asarray(vals).reshape(1, -1)
    idx = colormap_indices(p)[0]
    order = np.argsort(p[0], kind="stable")
    assert np.all(np.diff(idx[order]) >= 0)
    assert idx.min() >= 0 and idx.max() <= 255


def test_colormap_table():
    assert COLORMAP.shape == (256, 3)
    assert COLORMAP.min() >= 0 and COLORMAP.max() <= 1
    # dark blue-purple to yellow, luminance rising (up to 8-bit rounding)
    lum = COLORMAP @ [0.2126, 0.7152, 0.0722]
    assert np.all(np.diff(lum) > -2 / 255)
    assert lum[-1] - lum[0] > 0.7
    assert COLORMAP[0, 2] > COLORMAP[0, 1] and COLORMAP[-1, 0] > COLORMAP[-1, 2]


def test_image_determinism_and_export(tmp_path):
    rec, _ = gen_ecg(2, seed=3, duration_s=60.0)
    a, b = ecg_spectrogram(rec), ecg_spectrogram(rec)
    assert np.array_equal(a, b)
    assert a.shape == (3, 64, 64) and a.min() >= 0 and a.max() <= 1
    write_tensor(tmp_path / "x.f32", a)
    assert (tmp_path / "x.f32").stat().st_size == 3 * 64 * 64 * 4
    assert np.array_equal(read_tensor(tmp_path / "x.f32"), a.astype(np.float32))
    write_png(tmp_path / "x.png", a)
    im = np.asarray(Image.open(tmp_path / "x.png"))
    assert im.shape == (64, 64, 3)
    assert np.max(np.abs(im / 255.0 - a.transpose(1, 2, 0))) <= 0.5 / 255 + 1e-9
