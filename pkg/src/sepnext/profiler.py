"""Model cost reporting: parameter counts, multiply-accumulates, throughput.

MAC totals cover the network only; waveform decoding and spectrogram
extraction are excluded and the report says so. One multiply-accumulate is
counted once; reports also carry the doubled figure for comparison against
sources that count multiplies and adds separately.
"""

from __future__ import annotations

import time

import numpy as np

from . import ops
from .models import TaggerBase
from .tensor import Tensor


def count_params(model: TaggerBase) -> int:
    return model.param_count()


def count_macs(model: TaggerBase, frames: int | None = None) -> int:
    return model.mac_profile(frames)["total"]


def measured_macs(model: TaggerBase, frames: int | None = None) -> int:
    """MACs counted by instrumenting the actual conv/linear calls."""
    frames = frames or model.cfg.frames
    x = Tensor(np.zeros((1, 1, frames, model.cfg.n_mels), np.float32))
    model.train(False)
    with ops.runtime_macs as counter:
        model(x)
        return counter.count


def bench_throughput(
    model: TaggerBase,
    batch: int = 4,
    frames: int | None = None,
    repeats: int = 3,
) -> dict[str, float]:
    """Wall-clock forward throughput in clips/second, best of `repeats`."""
    frames = frames or model.cfg.frames
    rng = np.random.default_rng(0)
    x = Tensor(rng.normal(size=(batch, 1, frames, model.cfg.n_mels)).astype(np.float32))
    model.train(False)
    model(x)  # warm caches before timing
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        model(x)
        best = min(best, time.perf_counter() - t0)
    return {"clips_per_sec": batch / best, "batch_seconds": best}


def report_lines(model: TaggerBase, frames: int | None = None) -> list[str]:
    """Cost summary as stable `key=value` lines."""
    cfg = model.cfg
    frames = frames or cfg.frames
    profile = model.mac_profile(frames)
    macs = profile["total"]
    params = model.param_count()
    lines = [
        f"model={cfg.name}",
        f"input_frames={frames}",
        f"input_mels={cfg.n_mels}",
        f"num_classes={cfg.num_classes}",
        f"params={params}",
        f"params_millions={params / 1e6:.3f}",
        f"macs={macs}",
        f"macs_giga={macs / 1e9:.3f}",
        f"mult_adds={2 * macs}",
        f"mult_adds_giga={2 * macs / 1e9:.3f}",
        "note=MACs cover the network only; the waveform-to-mel frontend is excluded",
    ]
    for name, value in profile.items():
        if name != "total":
            lines.append(f"macs.{name}={value}")
    return lines
