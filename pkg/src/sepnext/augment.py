"""Training-time augmentations: spectrogram masking, mixup, speed perturbation.

Every function takes an explicit `numpy.random.Generator`; nothing here
touches global RNG state, so runs are reproducible from a single seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .frontend import Waveform
from .tensor import Tensor


@dataclass(frozen=True)
class AugmentConfig:
    """Stripe-mask limits and mixup strength.

    max_time_width / max_freq_width are the widest possible single stripe;
    each call draws 0..2 stripes per axis.
    """

    max_time_width: int = 64
    max_freq_width: int = 8
    mixup_alpha: float = 0.3

    def __post_init__(self) -> None:
        if self.max_time_width < 0 or self.max_freq_width < 0:
            raise ConfigError("mask widths must be >= 0")
        if self.mixup_alpha <= 0:
            raise ConfigError(f"mixup alpha must be > 0, got {self.mixup_alpha}")


def _mask_axis(
    x: np.ndarray, axis: int, max_width: int, rng: np.random.Generator
) -> list[tuple[int, int]]:
    """Zero 0..2 random stripes along `axis` of one (1, T, F) sample."""
    extent = x.shape[axis]
    stripes = []
    n_stripes = int(rng.integers(0, 3))
    for _ in range(n_stripes):
        width = int(rng.integers(0, min(max_width, extent) + 1))
        if width == 0:
            stripes.append((0, 0))
            continue
        start = int(rng.integers(0, extent - width + 1))
        sl = [slice(None)] * x.ndim
        sl[axis] = slice(start, start + width)
        x[tuple(sl)] = 0.0
        stripes.append((start, width))
    return stripes


def spec_augment(
    x: Tensor,
    cfg: AugmentConfig,
    rng: np.random.Generator,
    return_stripes: bool = False,
):
    """Zero out random time and frequency stripes, independently per sample.

    Per sample: stripe counts on each axis drawn uniformly from {0, 1, 2},
    each stripe's width uniform on [0, max_width] (clamped to the axis) and
    its position uniform over valid placements. Returns a new tensor; with
    `return_stripes` also returns per-sample (time, freq) stripe lists for
    inspection.
    """
    if len(x.shape) != 4:
        raise ShapeError(f"expected (N, C, T, F) input, got shape {x.shape}")
    out = x.array.copy()
    record = []
    for i in range(x.shape[0]):
        t_stripes = _mask_axis(out[i], 1, cfg.max_time_width, rng)
        f_stripes = _mask_axis(out[i], 2, cfg.max_freq_width, rng)
        record.append({"time": t_stripes, "freq": f_stripes})
    masked = Tensor(out)
    if return_stripes:
        return masked, record
    return masked


def mixup(
    x_a: Tensor,
    y_a: np.ndarray,
    x_b: Tensor,
    y_b: np.ndarray,
    alpha: float,
    rng: np.random.Generator,
) -> tuple[Tensor, np.ndarray, float]:
    """Convex combination of two batches with lambda ~ Beta(alpha, alpha).

    One lambda is drawn per call and applied to both features and targets;
    callers wanting per-example coefficients invoke this once per pair.
    """
    if alpha <= 0:
        raise ConfigError(f"mixup alpha must be > 0, got {alpha}")
    if x_a.shape != x_b.shape:
        raise ShapeError(f"feature shapes differ: {x_a.shape} vs {x_b.shape}")
    if y_a.shape != y_b.shape:
        raise ShapeError(f"target shapes differ: {y_a.shape} vs {y_b.shape}")
    lam = float(rng.beta(alpha, alpha))
    x = lam * x_a.array.astype(np.float64) + (1.0 - lam) * x_b.array.astype(np.float64)
    y = lam * y_a.astype(np.float64) + (1.0 - lam) * y_b.astype(np.float64)
    return Tensor(x.astype(x_a.dtype)), y, lam


def speed_perturb(
    wave: Waveform, rate: float, rng: np.random.Generator
) -> Waveform:
    """Nearest-neighbor time stretch by `rate`, then pad-or-crop back.

    rate > 1 plays faster (shorter signal), rate < 1 slower. The stretched
    signal is restored to the original length by a random split of the
    deficit into leading/trailing zero padding, or a random crop window when
    it came out longer. rate == 1 returns the input untouched without
    consuming randomness.
    """
    if rate <= 0:
        raise ConfigError(f"speed rate must be > 0, got {rate}")
    n = len(wave.samples)
    n_new = int(round(n / rate))
    if n_new == n:
        return wave
    if n_new <= 0:
        raise ConfigError(f"rate {rate} collapses a {n}-sample clip to nothing")
    idx = np.minimum((np.arange(n_new) * rate).astype(np.int64), n - 1)
    stretched = wave.samples[idx]
    if n_new < n:
        deficit = n - n_new
        lead = int(rng.integers(0, deficit + 1))
        out = np.zeros(n, dtype=np.float32)
        out[lead : lead + n_new] = stretched
    else:
        start = int(rng.integers(0, n_new - n + 1))
        out = np.ascontiguousarray(stretched[start : start + n])
    return Waveform(out, wave.sample_rate)
