"""Synthetic tone dataset for the overfit sanity check.

64 one-second clips at 8 kHz, each holding one or two pure tones. The label
space groups the 64 mel bins into 8 contiguous bands; a clip is positive for
band b iff it contains a tone whose frequency sits at the center of that
band. Class ids 0..7 occupy the first slots of the full 527-way label
vector, so the toy run exercises the real model head unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .frontend import MelConfig, Waveform, logmel, mel_to_hz, hz_to_mel
from .models import ModelConfig
from .tensor import Tensor


@dataclass(frozen=True)
class ToyConfig:
    n_clips: int = 64
    n_bands: int = 8
    sample_rate: int = 8000
    clip_samples: int = 8000
    two_tone_prob: float = 0.5
    num_classes: int = 527
    frames: int = 64

    def __post_init__(self) -> None:
        if self.n_bands < 2:
            raise ConfigError("need at least two bands")
        if self.num_classes < self.n_bands:
            raise ConfigError("label space smaller than the band count")


def toy_mel_config(cfg: ToyConfig | None = None) -> MelConfig:
    cfg = cfg or ToyConfig()
    return MelConfig(
        sample_rate=cfg.sample_rate,
        n_fft=256,
        hop=128,
        n_mels=64,
        f_min=50.0,
        f_max=3800.0,
    )


def band_frequency(band: int, cfg: ToyConfig | None = None) -> float:
    """Tone frequency at the peak of the center mel filter of a band."""
    cfg = cfg or ToyConfig()
    mel = toy_mel_config(cfg)
    if not 0 <= band < cfg.n_bands:
        raise ConfigError(f"band {band} outside [0, {cfg.n_bands})")
    bins_per_band = mel.n_mels // cfg.n_bands
    center_bin = band * bins_per_band + bins_per_band // 2
    mel_pts = np.linspace(hz_to_mel(mel.f_min), hz_to_mel(mel.f_max), mel.n_mels + 2)
    # filter k peaks at mel point k+1
    return float(mel_to_hz(mel_pts[center_bin + 1]))


def synth_clip(
    bands: list[int],
    amps: list[float],
    phases: list[float],
    cfg: ToyConfig | None = None,
) -> Waveform:
    cfg = cfg or ToyConfig()
    t = np.arange(cfg.clip_samples, dtype=np.float64) / cfg.sample_rate
    x = np.zeros(cfg.clip_samples, dtype=np.float64)
    for band, amp, phase in zip(bands, amps, phases):
        x += amp * np.sin(2.0 * np.pi * band_frequency(band, cfg) * t + phase)
    peak = np.max(np.abs(x))
    if peak > 0.95:
        x *= 0.95 / peak
    return Waveform(x.astype(np.float32), cfg.sample_rate)


@dataclass
class ToyDataset:
    features: Tensor  # (N, 1, frames, 64)
    targets: np.ndarray  # (N, num_classes) float32
    bands: list[list[int]]


def make_dataset(cfg: ToyConfig | None = None, seed: int = 0) -> ToyDataset:
    """Deterministic dataset: clip i always contains a tone in band i mod 8,
    plus a second tone in another band with probability `two_tone_prob`.
    """
    cfg = cfg or ToyConfig()
    mel = toy_mel_config(cfg)
    rng = np.random.default_rng(seed)
    feats = []
    targets = np.zeros((cfg.n_clips, cfg.num_classes), dtype=np.float32)
    all_bands: list[list[int]] = []
    for i in range(cfg.n_clips):
        bands = [i % cfg.n_bands]
        if rng.random() < cfg.two_tone_prob:
            other = int(rng.integers(0, cfg.n_bands - 1))
            if other >= bands[0]:
                other += 1
            bands.append(other)
        amps = [float(rng.uniform(0.3, 0.8)) for _ in bands]
        phases = [float(rng.uniform(0.0, 2.0 * np.pi)) for _ in bands]
        wave = synth_clip(bands, amps, phases, cfg)
        grid = logmel(wave, mel)  # (1, 1, 63, 64) for one second at hop 128
        t = grid.shape[2]
        if t < cfg.frames:
            pad = cfg.frames - t
            arr = np.pad(grid.array, ((0, 0), (0, 0), (0, pad), (0, 0)))
        else:
            arr = grid.array[:, :, : cfg.frames]
        feats.append(arr[0])
        for b in bands:
            targets[i, b] = 1.0
        all_bands.append(bands)
    features = Tensor(np.stack(feats).astype(np.float32))
    return ToyDataset(features=features, targets=targets, bands=all_bands)


def toy_model_config() -> ModelConfig:
    """Shrunken four-stage residual model matched to the 64x64 toy grids."""
    return ModelConfig(
        name="toy-convnext",
        family="convnext",
        n_mels=64,
        frames=64,
        clip_frames=64,
        pad_multiple=16,
        num_classes=527,
        depths=(1, 1, 1, 1),
        dims=(24, 48, 96, 192),
        drop_path_rate=0.0,
    )
