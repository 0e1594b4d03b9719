import struct

import numpy as np
import pytest

from sepnext.errors import AudioDecodeError, ConfigError, ShapeError
from sepnext.frontend import (
    MelConfig,
    Waveform,
    fit_time,
    hz_to_mel,
    load_wav,
    logmel,
    mel_filterbank,
    mel_to_hz,
    pad_time_multiple,
    resample,
    write_wav,
)
from sepnext.tensor import Tensor


def _wav_bytes(fmt_tag, channels, rate, bits, payload, fmt_extra=b""):
    fmt_body = struct.pack(
        "<HHIIHH",
        fmt_tag,
        channels,
        rate,
        rate * channels * bits // 8,
        channels * bits // 8,
        bits,
    ) + fmt_extra
    chunks = b"fmt " + struct.pack("<I", len(fmt_body)) + fmt_body
    if len(fmt_body) % 2:
        chunks += b"\x00"
    chunks += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) % 2:
        chunks += b"\x00"
    return b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks


def test_pcm16_round_trip(tmp_path, rng):
    x = (rng.uniform(-0.9, 0.9, 1600)).astype(np.float32)
    path = tmp_path / "a.wav"
    write_wav(path, Waveform(x, 16000))
    back = load_wav(path)
    assert back.sample_rate == 16000
    assert len(back.samples) == 1600
    np.testing.assert_allclose(back.samples, x, atol=0.51 / 32768)


def test_float32_wav(tmp_path, rng):
    x = rng.uniform(-1, 1, 100).astype("<f4")
    data = _wav_bytes(0x0003, 1, 8000, 32, x.tobytes())
    p = tmp_path / "f.wav"
    p.write_bytes(data)
    wave = load_wav(p)
    np.testing.assert_array_equal(wave.samples, x)
    assert wave.sample_rate == 8000


def test_stereo_averaged(tmp_path):
    left = np.array([0.5, -0.5, 0.25], "<f4")
    right = np.array([0.1, 0.3, -0.05], "<f4")
    inter = np.empty(6, "<f4")
    inter[0::2] = left
    inter[1::2] = right
    p = tmp_path / "s.wav"
    p.write_bytes(_wav_bytes(0x0003, 2, 8000, 32, inter.tobytes()))
    wave = load_wav(p)
    np.testing.assert_allclose(wave.samples, (left + right) / 2, rtol=1e-6)


def test_extensible_format_resolved(tmp_path, rng):
    x = rng.uniform(-1, 1, 50).astype("<f4")
    # cbSize=22, valid bits, channel mask, GUID starting with the real tag
    guid = struct.pack("<H", 0x0003) + b"\x00\x00" + b"\x00\x00\x10\x00\x80\x00\x00\xaa\x00\x38\x9b\x71"
    extra = struct.pack("<HHI", 22, 32, 0x4) + guid
    p = tmp_path / "e.wav"
    p.write_bytes(_wav_bytes(0xFFFE, 1, 8000, 32, x.tobytes(), fmt_extra=extra))
    wave = load_wav(p)
    np.testing.assert_array_equal(wave.samples, x)


@pytest.mark.parametrize(
    "mangle",
    [
        lambda d: b"OGGS" + d[4:],  # wrong container magic
        lambda d: d[:30],  # truncated mid-header
        lambda d: d.replace(b"data", b"datx"),  # no data chunk
    ],
)
def test_bad_files_raise(tmp_path, rng, mangle):
    x = rng.uniform(-1, 1, 50).astype("<f4")
    data = _wav_bytes(0x0003, 1, 8000, 32, x.tobytes())
    p = tmp_path / "bad.wav"
    p.write_bytes(mangle(data))
    with pytest.raises(AudioDecodeError):
        load_wav(p)


def test_unsupported_encoding_raises(tmp_path):
    # 8-bit PCM is not supported; the error names the format
    p = tmp_path / "u.wav"
    p.write_bytes(_wav_bytes(0x0001, 1, 8000, 8, b"\x80" * 10))
    with pytest.raises(AudioDecodeError, match="unsupported encoding"):
        load_wav(p)


def test_truncated_payload_raises(tmp_path, rng):
    x = rng.uniform(-1, 1, 50).astype("<f4")
    data = _wav_bytes(0x0003, 1, 8000, 32, x.tobytes())
    p = tmp_path / "t.wav"
    p.write_bytes(data[:-40])  # cut into the declared data chunk
    with pytest.raises(AudioDecodeError):
        load_wav(p)


def test_resample_identity_and_length():
    w = Waveform(np.sin(np.linspace(0, 20, 32000)).astype(np.float32), 32000)
    assert resample(w, 32000) is w
    half = resample(w, 16000)
    assert half.sample_rate == 16000
    assert len(half.samples) == 16000


def test_resample_preserves_tone_frequency():
    sr_in, sr_out, f = 16000, 32000, 440.0
    t = np.arange(sr_in) / sr_in
    w = Waveform(np.sin(2 * np.pi * f * t).astype(np.float32), sr_in)
    up = resample(w, sr_out)
    # count zero crossings: ~2f per second
    crossings = int(np.sum(np.abs(np.diff(np.signbit(up.samples)))))
    assert abs(crossings - 2 * f) <= 2


def test_mel_scale_round_trip():
    f = np.array([50.0, 440.0, 4000.0, 14000.0])
    np.testing.assert_allclose(mel_to_hz(hz_to_mel(f)), f, rtol=1e-10)
    # the reference point: 1000 Hz = 1000 mel
    np.testing.assert_allclose(hz_to_mel(1000.0), 999.9855, atol=1e-3)


def test_filterbank_shape_and_coverage():
    cfg = MelConfig()
    fb = mel_filterbank(cfg)
    assert fb.shape == (64, 513)
    assert np.all(fb >= 0)
    # every filter has support, peaks are 1 or close below (grid sampling)
    assert np.all(fb.max(axis=1) > 0.5)
    # filters below f_min and above f_max contribute nothing
    freqs = np.arange(513) * cfg.sample_rate / cfg.n_fft
    dead = (freqs < cfg.f_min) | (freqs > cfg.f_max)
    assert np.all(fb[:, dead] < 1e-12)


def test_logmel_shape_and_frame_count():
    cfg = MelConfig()
    n = 320000  # ten seconds at 32 kHz
    w = Waveform(np.zeros(n, np.float32), 32000)
    out = logmel(w, cfg)
    assert out.shape == (1, 1, 1 + n // cfg.hop, 64)


def test_logmel_silence_hits_floor():
    cfg = MelConfig()
    w = Waveform(np.zeros(6400, np.float32), 32000)
    out = logmel(w, cfg)
    np.testing.assert_allclose(out.array, -100.0)  # 10*log10(1e-10)


def test_logmel_tone_lands_in_expected_band():
    cfg = MelConfig()
    sr = 32000
    t = np.arange(sr) / sr
    tone = np.sin(2 * np.pi * 1000.0 * t).astype(np.float32)
    out = logmel(Waveform(tone, sr), cfg)
    profile = out.array[0, 0].mean(axis=0)
    peak_bin = int(profile.argmax())
    # find which filter peaks nearest 1000 Hz
    fb = mel_filterbank(cfg)
    freqs = np.arange(513) * sr / cfg.n_fft
    centers = freqs[fb.argmax(axis=1)]
    want = int(np.abs(centers - 1000.0).argmin())
    assert abs(peak_bin - want) <= 1


def test_logmel_rate_mismatch_raises():
    w = Waveform(np.zeros(100, np.float32), 16000)
    with pytest.raises(ConfigError):
        logmel(w, MelConfig())


def test_fit_time_crop_and_pad(rng):
    x = Tensor(rng.normal(size=(2, 1, 10, 4)).astype(np.float32))
    assert fit_time(x, 10) is x
    cropped = fit_time(x, 7)
    assert cropped.shape == (2, 1, 7, 4)
    np.testing.assert_array_equal(cropped.array, x.array[:, :, :7])
    padded = fit_time(x, 13)
    assert padded.shape == (2, 1, 13, 4)
    np.testing.assert_array_equal(padded.array[:, :, 10:], 0.0)
    with pytest.raises(ShapeError):
        fit_time(Tensor(rng.normal(size=(2, 3)).astype(np.float32)), 5)


def test_pad_time_multiple(rng):
    x = Tensor(rng.normal(size=(1, 1, 1000, 8)).astype(np.float32))
    y = pad_time_multiple(x, 16)
    assert y.shape == (1, 1, 1008, 8)
    assert pad_time_multiple(y, 16) is y


def test_mel_config_validation():
    with pytest.raises(ConfigError):
        MelConfig(f_min=100.0, f_max=50.0)
    with pytest.raises(ConfigError):
        MelConfig(f_max=20000.0)  # above Nyquist for 32 kHz
    with pytest.raises(ConfigError):
        MelConfig(hop=0)
