"""Parameter bookkeeping and the layer/block classes models are assembled from.

A Module owns parameters, running buffers and child modules, and implements
an explicit forward/backward pair: forward stores whatever backward will
need in `_cache`, backward accumulates parameter gradients in place and
returns the gradient with respect to its input. There is no autograd tape;
composite blocks spell out their reverse pass, which keeps the computation
auditable against the per-op gradient formulas.

Parameter names follow the registration tree, joined with dots, e.g.
"stages.2.blocks.4.dwconv.weight". Checkpoints address tensors by exactly
these names.
"""

from __future__ import annotations

from typing import Iterable, Iterator, Sequence

import numpy as np

from . import ops
from .errors import ConfigError, EngineError, ShapeError
from .ops import ConvSpec, NormParams
from .tensor import Tensor


def _join(prefix: str, name: str) -> str:
    return f"{prefix}.{name}" if prefix else name


def trunc_normal(
    shape: tuple[int, ...], std: float, rng: np.random.Generator
) -> np.ndarray:
    """Normal(0, std) samples redrawn until all fall within two deviations."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2.0 * std
    while np.any(bad):
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2.0 * std
    return out.astype(np.float32)


class Param:
    """A learnable array, its accumulated gradient, and decay eligibility.

    `decay=False` marks tensors the optimizer must exempt from weight decay
    (biases, normalization affines, per-channel scales).
    """

    __slots__ = ("value", "grad", "decay")

    def __init__(self, value: np.ndarray, decay: bool) -> None:
        self.value = value
        self.grad: np.ndarray | None = None
        self.decay = decay

    def accumulate(self, g: np.ndarray) -> None:
        if g.shape != self.value.shape:
            raise ShapeError(
                f"gradient shape {g.shape} != parameter shape {self.value.shape}"
            )
        g = g.astype(self.value.dtype, copy=False)
        self.grad = g.copy() if self.grad is None else self.grad + g


class Module:
    def __init__(self) -> None:
        self._params: dict[str, Param] = {}
        self._buffers: dict[str, np.ndarray] = {}
        self._children: dict[str, "Module"] = {}
        self.training = False
        self._cache = None

    # -- registration ------------------------------------------------------

    def register_param(
        self, name: str, value: np.ndarray, decay: bool = True
    ) -> Param:
        p = Param(np.ascontiguousarray(value), decay)
        self._params[name] = p
        return p

    def register_buffer(self, name: str, value: np.ndarray) -> np.ndarray:
        arr = np.ascontiguousarray(value)
        self._buffers[name] = arr
        return arr

    def register_child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    # -- traversal ---------------------------------------------------------

    def named_params(self, prefix: str = "") -> Iterator[tuple[str, Param]]:
        for name, p in self._params.items():
            yield _join(prefix, name), p
        for name, child in self._children.items():
            yield from child.named_params(_join(prefix, name))

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, arr in self._buffers.items():
            yield _join(prefix, name), arr
        for name, child in self._children.items():
            yield from child.named_buffers(_join(prefix, name))

    def named_state(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        """Everything a checkpoint stores: parameters plus running buffers."""
        for name, p in self.named_params(prefix):
            yield name, p.value
        for name, arr in self.named_buffers(prefix):
            yield name, arr

    def param_count(self) -> int:
        return sum(p.value.size for _, p in self.named_params())

    # -- mode and state management ------------------------------------------

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for child in self._children.values():
            child.train(mode)
        return self

    def zero_grad(self) -> None:
        for _, p in self.named_params():
            p.grad = None

    def set_dtype(self, dtype) -> "Module":
        """Cast all parameters and buffers; used by high-precision checks."""
        for p in self._params.values():
            p.value = np.ascontiguousarray(p.value.astype(dtype))
            p.grad = None
        for name in self._buffers:
            self._buffers[name] = np.ascontiguousarray(
                self._buffers[name].astype(dtype)
            )
        for child in self._children.values():
            child.set_dtype(dtype)
        return self

    def set_rng(self, rng: np.random.Generator) -> "Module":
        """Hand the generator to every stochastic submodule."""
        for child in self._children.values():
            child.set_rng(rng)
        return self

    # -- compute -------------------------------------------------------------

    def forward(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def backward(self, grad: Tensor) -> Tensor:
        raise NotImplementedError

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)

    def _require_cache(self):
        if self._cache is None:
            raise EngineError(
                f"{type(self).__name__}.backward called before forward"
            )
        return self._cache


class ModuleList(Module):
    def __init__(self, modules: Iterable[Module]) -> None:
        super().__init__()
        self._mods = list(modules)
        for i, m in enumerate(self._mods):
            self.register_child(str(i), m)

    def __iter__(self) -> Iterator[Module]:
        return iter(self._mods)

    def __getitem__(self, i: int) -> Module:
        return self._mods[i]

    def __len__(self) -> int:
        return len(self._mods)


class Container(Module):
    """Named grouping with no computation of its own."""

    def __init__(self, **modules: Module) -> None:
        super().__init__()
        for name, m in modules.items():
            setattr(self, name, self.register_child(name, m))


def run_chain(mods: Sequence[Module], x: Tensor) -> Tensor:
    for m in mods:
        x = m(x)
    return x


def back_chain(mods: Sequence[Module], grad: Tensor) -> Tensor:
    for m in reversed(mods):
        grad = m.backward(grad)
    return grad


# ---------------------------------------------------------------------------
# primitive layers
# ---------------------------------------------------------------------------


class Conv2d(Module):
    def __init__(self, spec: ConvSpec, rng: np.random.Generator) -> None:
        super().__init__()
        self.spec = spec
        self.weight = self.register_param(
            "weight", trunc_normal(spec.weight_shape(), 0.02, rng)
        )
        self.bias = self.register_param(
            "bias", np.zeros(spec.out_channels, np.float32), decay=False
        )

    def forward(self, x: Tensor) -> Tensor:
        self._cache = x
        return ops.conv2d(x, Tensor(self.weight.value), Tensor(self.bias.value), self.spec)

    def backward(self, grad: Tensor) -> Tensor:
        x = self._require_cache()
        gx, gw, gb = ops.conv2d_backward(grad, x, Tensor(self.weight.value), self.spec)
        self.weight.accumulate(gw.array)
        self.bias.accumulate(gb.array)
        return gx

    def macs(self, h: int, w: int) -> int:
        return self.spec.macs(h, w)

    def out_hw(self, h: int, w: int) -> tuple[int, int]:
        return self.spec.out_hw(h, w)


class BatchNorm2d(Module):
    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1) -> None:
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.gamma = self.register_param(
            "gamma", np.ones(channels, np.float32), decay=False
        )
        self.beta = self.register_param(
            "beta", np.zeros(channels, np.float32), decay=False
        )
        self.register_buffer("running_mean", np.zeros(channels, np.float32))
        self.register_buffer("running_var", np.ones(channels, np.float32))

    def _norm_params(self) -> NormParams:
        return NormParams(
            gamma=self.gamma.value,
            beta=self.beta.value,
            running_mean=self._buffers["running_mean"],
            running_var=self._buffers["running_var"],
            eps=self.eps,
            momentum=self.momentum,
        )

    def forward(self, x: Tensor) -> Tensor:
        self._cache = (x, self.training)
        return ops.batch_norm2d(x, self._norm_params(), self.training)

    def backward(self, grad: Tensor) -> Tensor:
        x, was_training = self._require_cache()
        gx, dg, db = ops.batch_norm2d_backward(grad, x, self._norm_params(), was_training)
        self.gamma.accumulate(dg.array)
        self.beta.accumulate(db.array)
        return gx


class MelBatchNorm(BatchNorm2d):
    """Batch normalization over the frequency bins of a (N, 1, T, F) input.

    Implemented by swapping the channel and frequency axes so the per-bin
    statistics reuse the plain per-channel kernel.
    """

    def _swap(self, x: Tensor) -> Tensor:
        if len(x.shape) != 4 or x.shape[1] != 1:
            raise ShapeError(f"expected (N, 1, T, F) input, got shape {x.shape}")
        return Tensor(np.ascontiguousarray(x.array.transpose(0, 3, 2, 1)))

    def forward(self, x: Tensor) -> Tensor:
        xt = self._swap(x)
        self._cache = (xt, self.training)
        yt = ops.batch_norm2d(xt, self._norm_params(), self.training)
        return Tensor(np.ascontiguousarray(yt.array.transpose(0, 3, 2, 1)))

    def backward(self, grad: Tensor) -> Tensor:
        xt, was_training = self._require_cache()
        gt = Tensor(np.ascontiguousarray(grad.array.transpose(0, 3, 2, 1)))
        gx, dg, db = ops.batch_norm2d_backward(gt, xt, self._norm_params(), was_training)
        self.gamma.accumulate(dg.array)
        self.beta.accumulate(db.array)
        return Tensor(np.ascontiguousarray(gx.array.transpose(0, 3, 2, 1)))


class ChannelLayerNorm(Module):
    def __init__(self, channels: int, eps: float = 1e-6) -> None:
        super().__init__()
        self.eps = eps
        self.gamma = self.register_param(
            "gamma", np.ones(channels, np.float32), decay=False
        )
        self.beta = self.register_param(
            "beta", np.zeros(channels, np.float32), decay=False
        )

    def forward(self, x: Tensor) -> Tensor:
        self._cache = x
        return ops.layer_norm_channels(x, self.gamma.value, self.beta.value, self.eps)

    def backward(self, grad: Tensor) -> Tensor:
        x = self._require_cache()
        gx, dg, db = ops.layer_norm_channels_backward(grad, x, self.gamma.value, self.eps)
        self.gamma.accumulate(dg.array)
        self.beta.accumulate(db.array)
        return gx


class GELU(Module):
    def forward(self, x: Tensor) -> Tensor:
        self._cache = x
        return ops.gelu(x)

    def backward(self, grad: Tensor) -> Tensor:
        return ops.gelu_backward(grad, self._require_cache())


class ReLU(Module):
    def forward(self, x: Tensor) -> Tensor:
        self._cache = x
        return ops.relu(x)

    def backward(self, grad: Tensor) -> Tensor:
        return ops.relu_backward(grad, self._require_cache())


class AvgPool2x2(Module):
    def forward(self, x: Tensor) -> Tensor:
        self._cache = x.shape
        return ops.avg_pool2x2(x)

    def backward(self, grad: Tensor) -> Tensor:
        return ops.avg_pool2x2_backward(grad, self._require_cache())

    @staticmethod
    def out_hw(h: int, w: int) -> tuple[int, int]:
        return h // 2, w // 2


class GlobalPool(Module):
    def __init__(self, mode: str) -> None:
        super().__init__()
        if mode not in ("gap", "pann"):
            raise ConfigError(f"unknown global pooling mode {mode!r}")
        self.mode = mode

    def forward(self, x: Tensor) -> Tensor:
        self._cache = x
        return ops.global_pool(x, self.mode)

    def backward(self, grad: Tensor) -> Tensor:
        return ops.global_pool_backward(grad, self._require_cache(), self.mode)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.d_in = d_in
        self.d_out = d_out
        self.weight = self.register_param(
            "weight", trunc_normal((d_out, d_in), 0.02, rng)
        )
        self.bias = self.register_param("bias", np.zeros(d_out, np.float32), decay=False)

    def forward(self, x: Tensor) -> Tensor:
        self._cache = x
        return ops.linear(x, Tensor(self.weight.value), Tensor(self.bias.value))

    def backward(self, grad: Tensor) -> Tensor:
        x = self._require_cache()
        gx, gw, gb = ops.linear_backward(grad, x, Tensor(self.weight.value))
        self.weight.accumulate(gw.array)
        self.bias.accumulate(gb.array)
        return gx

    def macs(self) -> int:
        return self.d_in * self.d_out


class DropPath(Module):
    """Stochastic depth gate; identity at rate 0 or in eval mode."""

    def __init__(self, rate: float) -> None:
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"drop path rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.rng: np.random.Generator | None = None

    def set_rng(self, rng: np.random.Generator) -> "Module":
        self.rng = rng
        return self

    def forward(self, x: Tensor) -> Tensor:
        if not self.training or self.rate == 0.0:
            self._cache = (None,)
            return x
        if self.rng is None:
            raise ConfigError("training-mode drop path needs set_rng() first")
        mask = ops.drop_path_mask(x.shape[0], self.rate, self.rng)
        self._cache = (mask,)
        return ops.apply_drop_mask(x, mask, self.rate)

    def backward(self, grad: Tensor) -> Tensor:
        (mask,) = self._require_cache()
        if mask is None:
            return grad
        return ops.drop_path_backward(grad, mask, self.rate)


# ---------------------------------------------------------------------------
# blocks
# ---------------------------------------------------------------------------


class ConvNeXtBlock(Module):
    """Depthwise 7x7, channel layer norm, 1x1 expand by 4, GELU, 1x1
    contract; the branch is scaled per channel and gated by stochastic depth
    before the residual add.
    """

    def __init__(
        self,
        dim: int,
        drop_rate: float,
        layer_scale_init: float | None,
        rng: np.random.Generator,
    ) -> None:
        super().__init__()
        self.dwconv = self.register_child(
            "dwconv",
            Conv2d(ConvSpec(dim, dim, (7, 7), padding=(3, 3), groups=dim), rng),
        )
        self.norm = self.register_child("norm", ChannelLayerNorm(dim))
        self.pwconv1 = self.register_child(
            "pwconv1", Conv2d(ConvSpec(dim, 4 * dim, (1, 1)), rng)
        )
        self.act = self.register_child("act", GELU())
        self.pwconv2 = self.register_child(
            "pwconv2", Conv2d(ConvSpec(4 * dim, dim, (1, 1)), rng)
        )
        self.layerscale: Param | None = None
        if layer_scale_init is not None:
            self.layerscale = self.register_param(
                "layerscale",
                np.full(dim, layer_scale_init, np.float32),
                decay=False,
            )
        self.droppath = self.register_child("droppath", DropPath(drop_rate))
        self._branch = (self.dwconv, self.norm, self.pwconv1, self.act, self.pwconv2)

    def forward(self, x: Tensor) -> Tensor:
        y = run_chain(self._branch, x)
        if self.layerscale is not None:
            self._cache = y
            y = Tensor(
                (y.array * self.layerscale.value[None, :, None, None]).astype(
                    y.dtype, copy=False
                )
            )
        else:
            self._cache = (None,)
        y = self.droppath(y)
        return x.add(y)

    def backward(self, grad: Tensor) -> Tensor:
        g = self.droppath.backward(grad)
        if self.layerscale is not None:
            branch = self._require_cache()
            gls = (
                g.array.astype(np.float64, copy=False)
                * branch.array.astype(np.float64, copy=False)
            ).sum(axis=(0, 2, 3))
            self.layerscale.accumulate(gls)
            g = Tensor(
                (g.array * self.layerscale.value[None, :, None, None]).astype(
                    g.dtype, copy=False
                )
            )
        gx = back_chain(self._branch, g)
        return gx.add(grad)

    def macs(self, h: int, w: int) -> int:
        return sum(m.macs(h, w) for m in (self.dwconv, self.pwconv1, self.pwconv2))


class SepNextBlock(Module):
    """7x7 conv (regular or depthwise with channel doubling), channel layer
    norm, then the 4x inverted bottleneck. No residual connection, so channel
    counts may change across the block.
    """

    def __init__(
        self, c_in: int, c_out: int, depthwise: bool, rng: np.random.Generator
    ) -> None:
        super().__init__()
        groups = c_in if depthwise else 1
        self.conv = self.register_child(
            "conv",
            Conv2d(ConvSpec(c_in, c_out, (7, 7), padding=(3, 3), groups=groups), rng),
        )
        self.norm = self.register_child("norm", ChannelLayerNorm(c_out))
        self.pwconv1 = self.register_child(
            "pwconv1", Conv2d(ConvSpec(c_out, 4 * c_out, (1, 1)), rng)
        )
        self.act = self.register_child("act", GELU())
        self.pwconv2 = self.register_child(
            "pwconv2", Conv2d(ConvSpec(4 * c_out, c_out, (1, 1)), rng)
        )
        self._chain = (self.conv, self.norm, self.pwconv1, self.act, self.pwconv2)

    def forward(self, x: Tensor) -> Tensor:
        return run_chain(self._chain, x)

    def backward(self, grad: Tensor) -> Tensor:
        return back_chain(self._chain, grad)

    def macs(self, h: int, w: int) -> int:
        return sum(m.macs(h, w) for m in (self.conv, self.pwconv1, self.pwconv2))


class ConvBlock5x5(Module):
    """Single 5x5 conv, batch norm, ReLU."""

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.conv = self.register_child(
            "conv", Conv2d(ConvSpec(c_in, c_out, (5, 5), padding=(2, 2)), rng)
        )
        self.bn = self.register_child("bn", BatchNorm2d(c_out))
        self.act = self.register_child("act", ReLU())
        self._chain = (self.conv, self.bn, self.act)

    def forward(self, x: Tensor) -> Tensor:
        return run_chain(self._chain, x)

    def backward(self, grad: Tensor) -> Tensor:
        return back_chain(self._chain, grad)

    def macs(self, h: int, w: int) -> int:
        return self.conv.macs(h, w)


class DoubleConvBlock(Module):
    """Two 3x3 conv+BN+ReLU stages; the second conv optionally runs one
    filter per channel instead of a dense channel mix.
    """

    def __init__(
        self, c_in: int, c_out: int, separable: bool, rng: np.random.Generator
    ) -> None:
        super().__init__()
        self.conv1 = self.register_child(
            "conv1", Conv2d(ConvSpec(c_in, c_out, (3, 3), padding=(1, 1)), rng)
        )
        self.bn1 = self.register_child("bn1", BatchNorm2d(c_out))
        self.act1 = self.register_child("act1", ReLU())
        groups = c_out if separable else 1
        self.conv2 = self.register_child(
            "conv2",
            Conv2d(ConvSpec(c_out, c_out, (3, 3), padding=(1, 1), groups=groups), rng),
        )
        self.bn2 = self.register_child("bn2", BatchNorm2d(c_out))
        self.act2 = self.register_child("act2", ReLU())
        self._chain = (self.conv1, self.bn1, self.act1, self.conv2, self.bn2, self.act2)

    def forward(self, x: Tensor) -> Tensor:
        return run_chain(self._chain, x)

    def backward(self, grad: Tensor) -> Tensor:
        return back_chain(self._chain, grad)

    def macs(self, h: int, w: int) -> int:
        return self.conv1.macs(h, w) + self.conv2.macs(h, w)


class PatchStem(Module):
    """Non-overlapping 4x4 patchify conv followed by channel layer norm."""

    def __init__(self, dim: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.conv = self.register_child(
            "conv", Conv2d(ConvSpec(1, dim, (4, 4), stride=(4, 4)), rng)
        )
        self.norm = self.register_child("norm", ChannelLayerNorm(dim))

    def forward(self, x: Tensor) -> Tensor:
        return self.norm(self.conv(x))

    def backward(self, grad: Tensor) -> Tensor:
        return self.conv.backward(self.norm.backward(grad))

    def macs(self, h: int, w: int) -> int:
        return self.conv.macs(h, w)

    def out_hw(self, h: int, w: int) -> tuple[int, int]:
        return self.conv.out_hw(h, w)


class Downsample(Module):
    """Channel layer norm then a 2x2 stride-2 conv that changes width."""

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.norm = self.register_child("norm", ChannelLayerNorm(c_in))
        self.conv = self.register_child(
            "conv", Conv2d(ConvSpec(c_in, c_out, (2, 2), stride=(2, 2)), rng)
        )

    def forward(self, x: Tensor) -> Tensor:
        return self.conv(self.norm(x))

    def backward(self, grad: Tensor) -> Tensor:
        return self.norm.backward(self.conv.backward(grad))

    def macs(self, h: int, w: int) -> int:
        return self.conv.macs(h, w)

    def out_hw(self, h: int, w: int) -> tuple[int, int]:
        return self.conv.out_hw(h, w)
