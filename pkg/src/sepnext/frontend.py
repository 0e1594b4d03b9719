"""Waveform loading and log-mel spectrogram extraction.

The WAV reader is written against the RIFF byte layout directly rather than
the stdlib `wave` module, because `wave` rejects IEEE-float files and gives
unhelpful errors on truncation. Supported encodings: 16-bit PCM and 32-bit
float, mono or stereo (stereo is averaged to mono). Anything else raises
AudioDecodeError with the offending format tag.

Mel filterbank follows the HTK convention, mel(f) = 2595 * log10(1 + f/700),
with triangular filters between `f_min` and `f_max` and no area
normalization. Power is floored at 1e-10 before the dB transform.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AudioDecodeError, ConfigError, ShapeError
from .tensor import Tensor

_POWER_FLOOR = 1e-10

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE


@dataclass(frozen=True)
class Waveform:
    """Mono float32 samples in [-1, 1] plus their sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        if self.samples.ndim != 1:
            raise ShapeError(f"waveform must be 1-D, got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise ConfigError(f"sample rate must be positive, got {self.sample_rate}")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class MelConfig:
    """Spectrogram geometry: STFT framing and mel filterbank range."""

    sample_rate: int = 32000
    n_fft: int = 1024
    hop: int = 320
    n_mels: int = 64
    f_min: float = 50.0
    f_max: float = 14000.0

    def __post_init__(self) -> None:
        if self.n_fft <= 0 or self.hop <= 0 or self.n_mels <= 0:
            raise ConfigError("n_fft, hop and n_mels must be positive")
        if not 0 <= self.f_min < self.f_max:
            raise ConfigError(f"need 0 <= f_min < f_max, got [{self.f_min}, {self.f_max}]")
        if self.f_max > self.sample_rate / 2:
            raise ConfigError(
                f"f_max {self.f_max} exceeds Nyquist {self.sample_rate / 2}"
            )

    def frame_count(self, n_samples: int) -> int:
        """Frames produced for a centered STFT over `n_samples` samples."""
        return 1 + n_samples // self.hop


def _read_exact(buf: bytes, offset: int, n: int, what: str) -> bytes:
    if offset + n > len(buf):
        raise AudioDecodeError(f"file truncated while reading {what}")
    return buf[offset : offset + n]


def load_wav(path: str | Path) -> Waveform:
    """Decode a RIFF/WAVE file to mono float32.

    16-bit PCM is scaled by 1/32768; 32-bit float is passed through.
    Extensible-format headers are resolved via their sub-format GUID.
    """
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise AudioDecodeError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    fmt_body = b""
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos : pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = _read_exact(data, pos + 8, size, f"chunk {cid!r}")
        if cid == b"fmt ":
            if size < 16:
                raise AudioDecodeError(f"{path}: fmt chunk too short ({size} bytes)")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
            fmt_body = body
        elif cid == b"data":
            payload = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned

    if fmt is None:
        raise AudioDecodeError(f"{path}: missing fmt chunk")
    if payload is None:
        raise AudioDecodeError(f"{path}: missing data chunk")

    tag, channels, rate, _, _, bits = fmt
    if tag == WAVE_FORMAT_EXTENSIBLE:
        # extension: u16 cbSize, u16 valid bits, u32 channel mask, 16-byte
        # GUID whose leading u16 is the real format tag
        if len(fmt_body) < 26:
            raise AudioDecodeError(f"{path}: extensible fmt chunk too short")
        (tag,) = struct.unpack_from("<H", fmt_body, 24)
    if channels not in (1, 2):
        raise AudioDecodeError(f"{path}: unsupported channel count {channels}")

    if tag == WAVE_FORMAT_PCM and bits == 16:
        if len(payload) % 2:
            raise AudioDecodeError(f"{path}: PCM16 payload has odd byte length")
        x = np.frombuffer(payload, dtype="<i2").astype(np.float32) / 32768.0
    elif tag == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        if len(payload) % 4:
            raise AudioDecodeError(f"{path}: float payload length not a multiple of 4")
        x = np.frombuffer(payload, dtype="<f4").astype(np.float32)
    else:
        raise AudioDecodeError(
            f"{path}: unsupported encoding (format tag {tag:#06x}, {bits}-bit)"
        )

    if channels == 2:
        if len(x) % 2:
            raise AudioDecodeError(f"{path}: stereo stream with odd sample count")
        x = x.reshape(-1, 2).mean(axis=1)
    return Waveform(np.ascontiguousarray(x, dtype=np.float32), rate)


def write_wav(path: str | Path, wave: Waveform) -> None:
    """Write mono 16-bit PCM; used by the toy-data generator and tests."""
    # round-to-nearest at the same 1/32768 scale the reader uses
    q = np.clip(np.round(wave.samples * 32768.0), -32768, 32767)
    pcm = q.astype("<i2").tobytes()
    hdr = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(pcm),
        b"WAVE",
        b"fmt ",
        16,
        WAVE_FORMAT_PCM,
        1,
        wave.sample_rate,
        wave.sample_rate * 2,
        2,
        16,
        b"data",
        len(pcm),
    )
    Path(path).write_bytes(hdr + pcm)


def resample(wave: Waveform, target_rate: int) -> Waveform:
    """Linear-interpolation resampling to `target_rate`.

    Output length is round(n * target / source); sample i of the output is
    taken at source time i / target_rate.
    """
    if target_rate <= 0:
        raise ConfigError(f"target rate must be positive, got {target_rate}")
    if target_rate == wave.sample_rate:
        return wave
    n_in = len(wave.samples)
    n_out = int(round(n_in * target_rate / wave.sample_rate))
    if n_in == 0 or n_out == 0:
        return Waveform(np.zeros(max(n_out, 0), dtype=np.float32), target_rate)
    t_out = np.arange(n_out, dtype=np.float64) / target_rate
    t_in = np.arange(n_in, dtype=np.float64) / wave.sample_rate
    y = np.interp(t_out, t_in, wave.samples.astype(np.float64))
    return Waveform(y.astype(np.float32), target_rate)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: MelConfig) -> np.ndarray:
    """(n_mels, n_fft//2 + 1) triangular filters, peak weight 1."""
    n_bins = cfg.n_fft // 2 + 1
    fft_freqs = np.arange(n_bins, dtype=np.float64) * cfg.sample_rate / cfg.n_fft
    mel_pts = np.linspace(hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max), cfg.n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    fb = np.zeros((cfg.n_mels, n_bins))
    for i in range(cfg.n_mels):
        lo, mid, hi = hz_pts[i], hz_pts[i + 1], hz_pts[i + 2]
        up = (fft_freqs - lo) / (mid - lo)
        down = (hi - fft_freqs) / (hi - mid)
        fb[i] = np.clip(np.minimum(up, down), 0.0, None)
    return fb


def logmel(wave: Waveform, cfg: MelConfig) -> Tensor:
    """Log-mel spectrogram of shape (1, 1, frames, n_mels).

    Centered framing: the signal is reflection-padded by n_fft//2 on each
    side, windowed with a periodic Hann window, and the power spectrum
    |rfft|^2 is projected through the mel filterbank before
    10*log10(max(power, 1e-10)).
    """
    if wave.sample_rate != cfg.sample_rate:
        raise ConfigError(
            f"waveform rate {wave.sample_rate} != config rate {cfg.sample_rate}; "
            "resample first"
        )
    x = wave.samples.astype(np.float64)
    half = cfg.n_fft // 2
    if len(x) == 0:
        raise ShapeError("cannot compute a spectrogram of an empty waveform")
    pad_mode = "reflect" if len(x) > 1 else "edge"
    xp = np.pad(x, (half, half), mode=pad_mode)
    frames = cfg.frame_count(len(x))
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(cfg.n_fft) / cfg.n_fft)
    starts = np.arange(frames) * cfg.hop
    idx = starts[:, None] + np.arange(cfg.n_fft)[None, :]
    seg = xp[idx] * window[None, :]
    spec = np.fft.rfft(seg, axis=1)
    power = spec.real**2 + spec.imag**2
    mel = power @ mel_filterbank(cfg).T
    out = 10.0 * np.log10(np.maximum(mel, _POWER_FLOOR))
    return Tensor(out.astype(np.float32)[None, None])


def fit_time(x: Tensor, frames: int) -> Tensor:
    """Crop or zero-pad the time axis (axis 2) to exactly `frames`."""
    if len(x.shape) != 4:
        raise ShapeError(f"expected (N, 1, T, F) input, got shape {x.shape}")
    if frames <= 0:
        raise ConfigError(f"frame target must be positive, got {frames}")
    t = x.shape[2]
    if t == frames:
        return x
    if t > frames:
        return Tensor(np.ascontiguousarray(x.array[:, :, :frames]))
    pad = frames - t
    return Tensor(np.pad(x.array, ((0, 0), (0, 0), (0, pad), (0, 0))))


def pad_time_multiple(x: Tensor, multiple: int) -> Tensor:
    """Zero-pad the time axis up to the next multiple of `multiple`."""
    if multiple <= 0:
        raise ConfigError(f"multiple must be positive, got {multiple}")
    t = x.shape[2]
    rem = t % multiple
    if rem == 0:
        return x
    return fit_time(x, t + multiple - rem)
