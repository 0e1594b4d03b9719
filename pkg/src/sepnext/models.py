"""The six audio taggers, their configuration records, and assembly code.

Two families share one training/inference surface:

* "cnn" models (cnn6, cnn6next, cnn14, cnn14sep): per-bin batch norm on the
  mel axis, a stack of conv blocks with 2x2 average pools between selected
  blocks, frequency-mean + time-(mean+max) pooling, and a two-layer
  classifier head.
* "convnext" models (convnext-tiny, convnext-small): 4x4 patchify stem, four
  stages of residual blocks separated by 2x2 stride-2 downsamples, global
  average pooling, layer norm, single linear head.

All models emit logits over `num_classes` labels; `predict` applies the
sigmoid. Canonical inputs are log-mel grids of shape (N, 1, frames, n_mels).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import ops
from .errors import ConfigError, ShapeError
from .frontend import MelConfig, fit_time, pad_time_multiple
from .layers import (
    AvgPool2x2,
    ChannelLayerNorm,
    Container,
    ConvBlock5x5,
    ConvNeXtBlock,
    Downsample,
    DoubleConvBlock,
    GlobalPool,
    Linear,
    MelBatchNorm,
    Module,
    ModuleList,
    PatchStem,
    ReLU,
    SepNextBlock,
    run_chain,
    back_chain,
)
from .tensor import Tensor


@dataclass(frozen=True)
class ModelConfig:
    """Everything needed to assemble a model and shape its input."""

    name: str
    family: str  # "cnn" or "convnext"
    n_mels: int
    frames: int  # canonical input length after padding
    clip_frames: int = 1000  # crop/pad target before stem alignment
    pad_multiple: int = 1  # zero-pad time up to this multiple
    num_classes: int = 527
    # cnn family
    block_kind: str = ""  # "single5" | "double3" | "double3sep" | "next"
    channels: tuple[int, ...] = ()
    pool_after: tuple[int, ...] = ()
    # convnext family
    depths: tuple[int, ...] = ()
    dims: tuple[int, ...] = ()
    drop_path_rate: float = 0.0
    layer_scale_init: float | None = 1e-6

    def __post_init__(self) -> None:
        if self.family not in ("cnn", "convnext"):
            raise ConfigError(f"unknown model family {self.family!r}")
        if self.num_classes < 1:
            raise ConfigError("num_classes must be >= 1")
        if self.family == "cnn":
            if not self.channels:
                raise ConfigError("cnn-family config needs block channels")
            if any(i >= len(self.channels) for i in self.pool_after):
                raise ConfigError("pool_after index out of range")
        else:
            if len(self.depths) != len(self.dims) or not self.depths:
                raise ConfigError("depths and dims must be non-empty, equal length")


MODEL_CONFIGS: dict[str, ModelConfig] = {
    "cnn6": ModelConfig(
        name="cnn6",
        family="cnn",
        n_mels=64,
        frames=1000,
        block_kind="single5",
        channels=(64, 128, 256, 512),
        pool_after=(0, 1, 2),
    ),
    "cnn6next": ModelConfig(
        name="cnn6next",
        family="cnn",
        n_mels=64,
        frames=1000,
        block_kind="next",
        channels=(64, 128, 256, 512),
        pool_after=(0, 1, 2),
    ),
    "cnn14": ModelConfig(
        name="cnn14",
        family="cnn",
        n_mels=64,
        frames=1000,
        block_kind="double3",
        channels=(64, 128, 256, 512, 1024, 2048),
        pool_after=(0, 1, 2, 3, 4, 5),
    ),
    "cnn14sep": ModelConfig(
        name="cnn14sep",
        family="cnn",
        n_mels=64,
        frames=1000,
        block_kind="double3sep",
        channels=(64, 128, 256, 512, 1024, 2048),
        pool_after=(0, 1, 2, 3, 4, 5),
    ),
    "convnext-tiny": ModelConfig(
        name="convnext-tiny",
        family="convnext",
        n_mels=224,
        frames=1008,
        pad_multiple=16,
        depths=(3, 3, 9, 3),
        dims=(96, 192, 384, 768),
    ),
    "convnext-small": ModelConfig(
        name="convnext-small",
        family="convnext",
        n_mels=224,
        frames=1008,
        pad_multiple=16,
        depths=(3, 3, 27, 3),
        dims=(96, 192, 384, 768),
    ),
}


class TaggerBase(Module):
    cfg: ModelConfig

    def predict(self, x: Tensor) -> Tensor:
        """Per-class probabilities: sigmoid over the forward logits."""
        return ops.sigmoid(self.forward(x))

    def _check_input(self, x: Tensor) -> None:
        if len(x.shape) != 4 or x.shape[1] != 1:
            raise ShapeError(f"expected (N, 1, T, F) input, got shape {x.shape}")
        if x.shape[3] != self.cfg.n_mels:
            raise ShapeError(
                f"{self.cfg.name} expects {self.cfg.n_mels} mel bins, got {x.shape[3]}"
            )

    def mac_profile(self, frames: int | None = None, batch: int = 1) -> dict[str, int]:
        raise NotImplementedError

    def spatial_trace(
        self, frames: int | None = None
    ) -> list[tuple[str, tuple[int, int, int]]]:
        raise NotImplementedError


class AudioCnn(TaggerBase):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator) -> None:
        super().__init__()
        self.cfg = cfg
        self.melnorm = self.register_child("melnorm", MelBatchNorm(cfg.n_mels))
        blocks = []
        c_in = 1
        for i, c_out in enumerate(cfg.channels):
            if cfg.block_kind == "single5":
                b = ConvBlock5x5(c_in, c_out, rng)
            elif cfg.block_kind == "double3":
                b = DoubleConvBlock(c_in, c_out, separable=False, rng=rng)
            elif cfg.block_kind == "double3sep":
                b = DoubleConvBlock(c_in, c_out, separable=True, rng=rng)
            elif cfg.block_kind == "next":
                b = SepNextBlock(c_in, c_out, depthwise=(i > 0), rng=rng)
            else:
                raise ConfigError(f"unknown block kind {cfg.block_kind!r}")
            blocks.append(b)
            c_in = c_out
        self.blocks = self.register_child("blocks", ModuleList(blocks))
        self._pool_map = {
            i: AvgPool2x2() for i in cfg.pool_after
        }
        self.register_child(
            "pools", ModuleList([self._pool_map[i] for i in sorted(self._pool_map)])
        )
        self.gpool = self.register_child("gpool", GlobalPool("pann"))
        width = cfg.channels[-1]
        self.head = self.register_child(
            "head",
            Container(
                fc1=Linear(width, width, rng),
                act=ReLU(),
                fc2=Linear(width, cfg.num_classes, rng),
            ),
        )

    def forward(self, x: Tensor) -> Tensor:
        self._check_input(x)
        x = self.melnorm(x)
        for i, block in enumerate(self.blocks):
            x = block(x)
            if i in self._pool_map:
                x = self._pool_map[i](x)
        x = self.gpool(x)
        return run_chain((self.head.fc1, self.head.act, self.head.fc2), x)

    def backward(self, grad: Tensor) -> Tensor:
        g = back_chain((self.head.fc1, self.head.act, self.head.fc2), grad)
        g = self.gpool.backward(g)
        for i in reversed(range(len(self.blocks))):
            if i in self._pool_map:
                g = self._pool_map[i].backward(g)
            g = self.blocks[i].backward(g)
        return self.melnorm.backward(g)

    def spatial_trace(self, frames=None):
        h, w = frames or self.cfg.frames, self.cfg.n_mels
        trace = [("input", (1, h, w))]
        for i, (block, c) in enumerate(zip(self.blocks, self.cfg.channels)):
            trace.append((f"blocks.{i}", (c, h, w)))
            if i in self._pool_map:
                h, w = h // 2, w // 2
                trace.append((f"pool.{i}", (c, h, w)))
        return trace

    def mac_profile(self, frames=None, batch=1):
        h, w = frames or self.cfg.frames, self.cfg.n_mels
        out: dict[str, int] = {}
        for i, block in enumerate(self.blocks):
            out[f"blocks.{i}"] = batch * block.macs(h, w)
            if i in self._pool_map:
                h, w = h // 2, w // 2
        out["head.fc1"] = batch * self.head.fc1.macs()
        out["head.fc2"] = batch * self.head.fc2.macs()
        out["total"] = sum(out.values())
        return out


class AudioConvNext(TaggerBase):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator) -> None:
        super().__init__()
        self.cfg = cfg
        self.stem = self.register_child("stem", PatchStem(cfg.dims[0], rng))
        total_blocks = sum(cfg.depths)
        rates = np.linspace(0.0, cfg.drop_path_rate, total_blocks)
        stages = []
        k = 0
        for depth, dim in zip(cfg.depths, cfg.dims):
            blocks = ModuleList(
                [
                    ConvNeXtBlock(dim, float(rates[k + j]), cfg.layer_scale_init, rng)
                    for j in range(depth)
                ]
            )
            k += depth
            stages.append(Container(blocks=blocks))
        self.stages = self.register_child("stages", ModuleList(stages))
        self.downsamples = self.register_child(
            "downsamples",
            ModuleList(
                [
                    Downsample(cfg.dims[i], cfg.dims[i + 1], rng)
                    for i in range(len(cfg.dims) - 1)
                ]
            ),
        )
        self.gpool = self.register_child("gpool", GlobalPool("gap"))
        self.head = self.register_child(
            "head",
            Container(
                norm=ChannelLayerNorm(cfg.dims[-1]),
                fc=Linear(cfg.dims[-1], cfg.num_classes, rng),
            ),
        )

    def forward(self, x: Tensor) -> Tensor:
        self._check_input(x)
        x = self.stem(x)
        for i, stage in enumerate(self.stages):
            x = run_chain(list(stage.blocks), x)
            if i < len(self.downsamples):
                x = self.downsamples[i](x)
        x = self.gpool(x)
        return self.head.fc(self.head.norm(x))

    def backward(self, grad: Tensor) -> Tensor:
        g = self.head.norm.backward(self.head.fc.backward(grad))
        g = self.gpool.backward(g)
        for i in reversed(range(len(self.stages))):
            if i < len(self.downsamples):
                g = self.downsamples[i].backward(g)
            g = back_chain(list(self.stages[i].blocks), g)
        return self.stem.backward(g)

    def spatial_trace(self, frames=None):
        h, w = frames or self.cfg.frames, self.cfg.n_mels
        trace = [("input", (1, h, w))]
        h, w = self.stem.out_hw(h, w)
        trace.append(("stem", (self.cfg.dims[0], h, w)))
        for i, dim in enumerate(self.cfg.dims):
            trace.append((f"stages.{i}", (dim, h, w)))
            if i < len(self.downsamples):
                h, w = self.downsamples[i].out_hw(h, w)
                trace.append((f"downsamples.{i}", (self.cfg.dims[i + 1], h, w)))
        return trace

    def mac_profile(self, frames=None, batch=1):
        h, w = frames or self.cfg.frames, self.cfg.n_mels
        out: dict[str, int] = {"stem": batch * self.stem.macs(h, w)}
        h, w = self.stem.out_hw(h, w)
        for i, stage in enumerate(self.stages):
            out[f"stages.{i}"] = batch * sum(b.macs(h, w) for b in stage.blocks)
            if i < len(self.downsamples):
                out[f"downsamples.{i}"] = batch * self.downsamples[i].macs(h, w)
                h, w = self.downsamples[i].out_hw(h, w)
        out["head.fc"] = batch * self.head.fc.macs()
        out["total"] = sum(out.values())
        return out


def build(config: str | ModelConfig, seed: int = 0, **overrides) -> TaggerBase:
    """Assemble a model from a registry name or an explicit config.

    Keyword overrides are applied with dataclasses.replace, e.g.
    build("convnext-tiny", drop_path_rate=0.4).
    """
    if isinstance(config, str):
        if config not in MODEL_CONFIGS:
            known = ", ".join(sorted(MODEL_CONFIGS))
            raise ConfigError(f"unknown model {config!r}; known models: {known}")
        cfg = MODEL_CONFIGS[config]
    else:
        cfg = config
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    rng = np.random.default_rng(seed)
    if cfg.family == "cnn":
        return AudioCnn(cfg, rng)
    return AudioConvNext(cfg, rng)


def mel_config_for(config: str | ModelConfig) -> MelConfig:
    """The 32 kHz log-mel settings a model was designed around."""
    cfg = MODEL_CONFIGS[config] if isinstance(config, str) else config
    return MelConfig(
        sample_rate=32000, n_fft=1024, hop=320, n_mels=cfg.n_mels, f_min=50.0, f_max=14000.0
    )


def prepare_input(cfg: ModelConfig, feats: Tensor) -> Tensor:
    """Crop/pad a (N, 1, T, F) feature grid to the model's canonical length."""
    x = fit_time(feats, cfg.clip_frames)
    if cfg.pad_multiple > 1:
        x = pad_time_multiple(x, cfg.pad_multiple)
    return x
