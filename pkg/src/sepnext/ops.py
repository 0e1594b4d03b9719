"""Forward and backward implementations of every layer in the model family.

All operations are pure functions over `Tensor` inputs. Inner products
(convolutions, matmuls, normalization statistics) accumulate in float64 and
the result is cast back to the input dtype, so float32 activations still get
stable gradients; feeding float64 tensors runs the whole op at 64-bit, which
is the mode the high-precision gradient checks use.

Convolution uses an im2col + matmul path. The brute-force nested-loop
reference it is validated against lives with the tests, keeping the two
routes independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from .errors import ConfigError, ShapeError
from .tensor import Tensor

INV_SQRT2 = 1.0 / math.sqrt(2.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class MacCounter:
    """Counts the multiply-accumulates actually issued by conv/linear calls.

    Disabled by default; the profiler's analytic counter is cross-checked
    against this instrumented count. Single-threaded use only.
    """

    def __init__(self) -> None:
        self.enabled = False
        self.count = 0

    def reset(self) -> None:
        self.count = 0

    def add(self, n: int) -> None:
        if self.enabled:
            self.count += int(n)

    def __enter__(self) -> "MacCounter":
        self.enabled = True
        self.reset()
        return self

    def __exit__(self, *exc) -> None:
        self.enabled = False


runtime_macs = MacCounter()


@dataclass(frozen=True)
class ConvSpec:
    """Geometry of a 2-D convolution; groups == in_channels is depthwise."""

    in_channels: int
    out_channels: int
    kernel: tuple[int, int]
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int] = (0, 0)
    groups: int = 1

    def __post_init__(self) -> None:
        if self.groups < 1:
            raise ConfigError(f"groups must be >= 1, got {self.groups}")
        if self.in_channels % self.groups or self.out_channels % self.groups:
            raise ConfigError(
                f"channels ({self.in_channels}->{self.out_channels}) not divisible "
                f"by groups {self.groups}"
            )
        if any(k < 1 for k in self.kernel) or any(s < 1 for s in self.stride):
            raise ConfigError("kernel and stride extents must be >= 1")
        if any(p < 0 for p in self.padding):
            raise ConfigError("padding must be >= 0")

    @property
    def depthwise_multiplier(self) -> int | None:
        """K = C_out / C_in when groups == C_in, else None."""
        if self.groups == self.in_channels:
            return self.out_channels // self.in_channels
        return None

    def out_hw(self, h: int, w: int) -> tuple[int, int]:
        kh, kw = self.kernel
        sh, sw = self.stride
        ph, pw = self.padding
        if kh > h + 2 * ph or kw > w + 2 * pw:
            raise ShapeError(
                f"kernel {self.kernel} larger than padded input ({h}+2*{ph}, {w}+2*{pw})"
            )
        return (h + 2 * ph - kh) // sh + 1, (w + 2 * pw - kw) // sw + 1

    def weight_shape(self) -> tuple[int, int, int, int]:
        return (self.out_channels, self.in_channels // self.groups, *self.kernel)

    def param_count(self, bias: bool = True) -> int:
        n = self.out_channels * (self.in_channels // self.groups) * self.kernel[0] * self.kernel[1]
        return n + (self.out_channels if bias else 0)

    def macs(self, h: int, w: int, batch: int = 1) -> int:
        ho, wo = self.out_hw(h, w)
        per_px = (self.in_channels // self.groups) * self.kernel[0] * self.kernel[1]
        return batch * self.out_channels * ho * wo * per_px


@dataclass
class NormParams:
    """Per-channel affine and running statistics for batch normalization."""

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    eps: float = 1e-5
    momentum: float = 0.1

    def __post_init__(self) -> None:
        n = self.gamma.shape[0]
        for name in ("beta", "running_mean", "running_var"):
            if getattr(self, name).shape != (n,):
                raise ShapeError(f"{name} length must equal channel count {n}")
        if np.any(self.running_var < 0):
            raise ConfigError("running variance must be >= 0")
        if self.eps <= 0:
            raise ConfigError("eps must be > 0")


def _check_rank(x: Tensor, rank: int, what: str) -> None:
    if len(x.shape) != rank:
        raise ShapeError(f"{what} must be rank {rank}, got shape {x.shape}")


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------


def _im2col(xp: np.ndarray, spec: ConvSpec, ho: int, wo: int) -> np.ndarray:
    """(N, Cin, Hp, Wp) padded input -> (N, g, (Cin/g)*kh*kw, ho*wo) columns."""
    n, cin = xp.shape[:2]
    kh, kw = spec.kernel
    sh, sw = spec.stride
    g = spec.groups
    cig = cin // g
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    # (N, Cin, ho, wo, kh, kw) -> (N, g, Cin/g, kh, kw, ho, wo)
    win = win.transpose(0, 1, 4, 5, 2, 3).reshape(n, g, cig, kh, kw, ho, wo)
    return win.reshape(n, g, cig * kh * kw, ho * wo)


def _conv_geometry(x: Tensor, w: Tensor, b: Tensor, spec: ConvSpec):
    _check_rank(x, 4, "conv input")
    n, cin, h, wd = x.shape
    if cin != spec.in_channels:
        raise ShapeError(f"input has {cin} channels, spec expects {spec.in_channels}")
    if w.shape != spec.weight_shape():
        raise ShapeError(f"weight shape {w.shape} != spec {spec.weight_shape()}")
    if b.shape != (spec.out_channels,):
        raise ShapeError(f"bias length {b.shape} != out_channels {spec.out_channels}")
    ho, wo = spec.out_hw(h, wd)
    return n, h, wd, ho, wo


def conv2d(x: Tensor, w: Tensor, b: Tensor, spec: ConvSpec) -> Tensor:
    """Grouped 2-D convolution with zero padding.

    Output shape (N, C_out, floor((H+2ph-kh)/sh)+1, floor((W+2pw-kw)/sw)+1).
    """
    n, h, wd, ho, wo = _conv_geometry(x, w, b, spec)
    g = spec.groups
    og = spec.out_channels // g
    ph, pw = spec.padding
    xp = np.pad(x.array, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    cols = _im2col(xp, spec, ho, wo).astype(np.float64, copy=False)
    wg = w.array.reshape(g, og, -1).astype(np.float64, copy=False)
    out = np.matmul(wg[None], cols)  # (N, g, og, ho*wo)
    runtime_macs.add(n * g * og * wg.shape[-1] * ho * wo)
    out = out.reshape(n, spec.out_channels, ho, wo)
    out += b.array.astype(np.float64, copy=False)[None, :, None, None]
    return Tensor(out.astype(x.dtype, copy=False))


def conv2d_backward(
    grad_out: Tensor, x: Tensor, w: Tensor, spec: ConvSpec
) -> tuple[Tensor, Tensor, Tensor]:
    """Gradients of conv2d w.r.t. (input, weight, bias)."""
    n, h, wd, ho, wo = _conv_geometry(x, w, Tensor(np.zeros(spec.out_channels)), spec)
    if grad_out.shape != (n, spec.out_channels, ho, wo):
        raise ShapeError(
            f"grad shape {grad_out.shape} != output shape {(n, spec.out_channels, ho, wo)}"
        )
    g = spec.groups
    og = spec.out_channels // g
    cig = spec.in_channels // g
    kh, kw = spec.kernel
    sh, sw = spec.stride
    ph, pw = spec.padding

    go = grad_out.array.astype(np.float64, copy=False)
    gb = go.sum(axis=(0, 2, 3))

    xp = np.pad(x.array, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    cols = _im2col(xp, spec, ho, wo).astype(np.float64, copy=False)
    gor = go.reshape(n, g, og, ho * wo)
    gw = np.einsum("ngop,ngkp->gok", gor, cols).reshape(w.shape)

    wg = w.array.reshape(g, og, -1).astype(np.float64, copy=False)
    gcols = np.matmul(wg.transpose(0, 2, 1)[None], gor)  # (N, g, cig*kh*kw, ho*wo)
    gcols = gcols.reshape(n, spec.in_channels, kh, kw, ho, wo)
    gxp = np.zeros((n, spec.in_channels, h + 2 * ph, wd + 2 * pw))
    for i in range(kh):
        for j in range(kw):
            gxp[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw] += gcols[:, :, i, j]
    gx = gxp[:, :, ph : ph + h, pw : pw + wd]
    return (
        Tensor(gx.astype(x.dtype, copy=False)),
        Tensor(gw.astype(w.dtype, copy=False)),
        Tensor(gb.astype(w.dtype, copy=False)),
    )


def pointwise(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """1x1 convolution; spatial dims unchanged."""
    if len(w.shape) != 4 or w.shape[2:] != (1, 1):
        raise ShapeError(f"pointwise weight must be (C_out, C_in, 1, 1), got {w.shape}")
    spec = ConvSpec(w.shape[1], w.shape[0], kernel=(1, 1))
    return conv2d(x, w, b, spec)


def pointwise_backward(grad_out: Tensor, x: Tensor, w: Tensor):
    spec = ConvSpec(w.shape[1], w.shape[0], kernel=(1, 1))
    return conv2d_backward(grad_out, x, w, spec)


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------


def _bn_check(x: Tensor, p: NormParams) -> None:
    _check_rank(x, 4, "batch_norm input")
    if x.shape[1] != p.gamma.shape[0]:
        raise ShapeError(f"input has {x.shape[1]} channels, params {p.gamma.shape[0]}")


def batch_norm2d(x: Tensor, p: NormParams, training: bool = False) -> Tensor:
    """Per-channel batch normalization over (N, H, W).

    Training mode normalizes with the batch's population statistics and
    updates the running stats in place with momentum `p.momentum`.
    """
    _bn_check(x, p)
    xa = x.array.astype(np.float64, copy=False)
    if training:
        mean = xa.mean(axis=(0, 2, 3))
        var = xa.var(axis=(0, 2, 3))
        m = p.momentum
        p.running_mean[...] = ((1 - m) * p.running_mean + m * mean).astype(
            p.running_mean.dtype
        )
        p.running_var[...] = ((1 - m) * p.running_var + m * var).astype(
            p.running_var.dtype
        )
    else:
        mean = p.running_mean.astype(np.float64)
        var = p.running_var.astype(np.float64)
    inv = 1.0 / np.sqrt(var + p.eps)
    scale = p.gamma * inv
    shift = p.beta - mean * scale
    out = xa * scale[None, :, None, None] + shift[None, :, None, None]
    return Tensor(out.astype(x.dtype, copy=False))


def batch_norm2d_backward(
    grad_out: Tensor, x: Tensor, p: NormParams, training: bool
) -> tuple[Tensor, Tensor, Tensor]:
    """Gradients w.r.t. (input, gamma, beta); batch stats are recomputed."""
    _bn_check(x, p)
    if grad_out.shape != x.shape:
        raise ShapeError(f"grad shape {grad_out.shape} != input shape {x.shape}")
    xa = x.array.astype(np.float64, copy=False)
    go = grad_out.array.astype(np.float64, copy=False)
    if training:
        mean = xa.mean(axis=(0, 2, 3), keepdims=True)
        var = xa.var(axis=(0, 2, 3), keepdims=True)
        inv = 1.0 / np.sqrt(var + p.eps)
        xhat = (xa - mean) * inv
        dxhat = go * p.gamma[None, :, None, None]
        m1 = dxhat.mean(axis=(0, 2, 3), keepdims=True)
        m2 = (dxhat * xhat).mean(axis=(0, 2, 3), keepdims=True)
        gx = inv * (dxhat - m1 - xhat * m2)
    else:
        inv = 1.0 / np.sqrt(p.running_var.astype(np.float64) + p.eps)
        xhat = (xa - p.running_mean[None, :, None, None]) * inv[None, :, None, None]
        gx = go * (p.gamma * inv)[None, :, None, None]
    dgamma = (go * xhat).sum(axis=(0, 2, 3))
    dbeta = go.sum(axis=(0, 2, 3))
    return (
        Tensor(gx.astype(x.dtype, copy=False)),
        Tensor(dgamma.astype(p.gamma.dtype, copy=False)),
        Tensor(dbeta.astype(p.beta.dtype, copy=False)),
    )


def _ln_reshape(x: Tensor) -> tuple[np.ndarray, tuple[int, ...]]:
    if len(x.shape) == 2:
        return x.array[:, :, None, None], x.shape
    _check_rank(x, 4, "layer_norm input")
    return x.array, x.shape


def layer_norm_channels(
    x: Tensor, gamma: np.ndarray, beta: np.ndarray, eps: float = 1e-6
) -> Tensor:
    """ConvNeXt-style layer norm: normalize the channel vector at each
    (n, h, w) position to zero mean / unit population variance, then apply
    the per-channel affine. Rank-2 (N, C) inputs are treated as (N, C, 1, 1).
    """
    xa, shape = _ln_reshape(x)
    c = xa.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"affine length must be {c}, got {gamma.shape}/{beta.shape}")
    xa = xa.astype(np.float64, copy=False)
    mean = xa.mean(axis=1, keepdims=True)
    var = xa.var(axis=1, keepdims=True)
    xhat = (xa - mean) / np.sqrt(var + eps)
    out = xhat * gamma[None, :, None, None] + beta[None, :, None, None]
    return Tensor(out.reshape(shape).astype(x.dtype, copy=False))


def layer_norm_channels_backward(
    grad_out: Tensor, x: Tensor, gamma: np.ndarray, eps: float = 1e-6
) -> tuple[Tensor, Tensor, Tensor]:
    xa, shape = _ln_reshape(x)
    go, _ = _ln_reshape(grad_out)
    if go.shape != xa.shape:
        raise ShapeError(f"grad shape {grad_out.shape} != input shape {x.shape}")
    xa = xa.astype(np.float64, copy=False)
    go = go.astype(np.float64, copy=False)
    mean = xa.mean(axis=1, keepdims=True)
    var = xa.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xa - mean) * inv
    dxhat = go * gamma[None, :, None, None]
    m1 = dxhat.mean(axis=1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=1, keepdims=True)
    gx = inv * (dxhat - m1 - xhat * m2)
    dgamma = (go * xhat).sum(axis=(0, 2, 3))
    dbeta = go.sum(axis=(0, 2, 3))
    return (
        Tensor(gx.reshape(shape).astype(x.dtype, copy=False)),
        Tensor(dgamma.astype(gamma.dtype, copy=False)),
        Tensor(dbeta.astype(gamma.dtype, copy=False)),
    )


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------


def gelu(x: Tensor) -> Tensor:
    """Exact Gaussian-CDF GELU: x * Phi(x), no tanh approximation."""
    xa = x.array.astype(np.float64, copy=False)
    out = xa * 0.5 * (1.0 + erf(xa * INV_SQRT2))
    return Tensor(out.astype(x.dtype, copy=False))


def gelu_backward(grad_out: Tensor, x: Tensor) -> Tensor:
    xa = x.array.astype(np.float64, copy=False)
    phi = 0.5 * (1.0 + erf(xa * INV_SQRT2))
    pdf = INV_SQRT_2PI * np.exp(-0.5 * xa * xa)
    grad = grad_out.array.astype(np.float64, copy=False) * (phi + xa * pdf)
    return Tensor(grad.astype(x.dtype, copy=False))


def relu(x: Tensor) -> Tensor:
    return Tensor(np.maximum(x.array, 0))


def relu_backward(grad_out: Tensor, x: Tensor) -> Tensor:
    return Tensor(np.where(x.array > 0, grad_out.array, 0).astype(x.dtype, copy=False))


def sigmoid(x: Tensor) -> Tensor:
    xa = x.array.astype(np.float64, copy=False)
    out = np.where(xa >= 0, 1.0 / (1.0 + np.exp(-np.abs(xa))), np.exp(-np.abs(xa)) / (1.0 + np.exp(-np.abs(xa))))
    return Tensor(out.astype(x.dtype, copy=False))


def sigmoid_backward(grad_out: Tensor, y: Tensor) -> Tensor:
    """Gradient from the op's output y = sigmoid(x)."""
    ya = y.array.astype(np.float64, copy=False)
    grad = grad_out.array.astype(np.float64, copy=False) * ya * (1.0 - ya)
    return Tensor(grad.astype(y.dtype, copy=False))


# ---------------------------------------------------------------------------
# pooling
# ---------------------------------------------------------------------------


def avg_pool2x2(x: Tensor) -> Tensor:
    """2x2 average pooling, stride 2; odd trailing row/col dropped."""
    _check_rank(x, 4, "pool input")
    n, c, h, w = x.shape
    if h < 2 or w < 2:
        raise ShapeError(f"2x2 pooling needs H,W >= 2, got ({h},{w})")
    h2, w2 = h // 2, w // 2
    v = x.array[:, :, : 2 * h2, : 2 * w2].reshape(n, c, h2, 2, w2, 2)
    out = v.mean(axis=(3, 5), dtype=np.float64)
    return Tensor(out.astype(x.dtype, copy=False))


def avg_pool2x2_backward(grad_out: Tensor, x_shape: tuple[int, ...]) -> Tensor:
    n, c, h, w = x_shape
    h2, w2 = h // 2, w // 2
    go = grad_out.array.astype(np.float64, copy=False)
    if go.shape != (n, c, h2, w2):
        raise ShapeError(f"grad shape {go.shape} != pooled shape {(n, c, h2, w2)}")
    gx = np.zeros((n, c, h, w))
    spread = np.broadcast_to((go * 0.25)[:, :, :, None, :, None], (n, c, h2, 2, w2, 2))
    gx[:, :, : 2 * h2, : 2 * w2] = spread.reshape(n, c, 2 * h2, 2 * w2)
    return Tensor(gx.astype(grad_out.dtype, copy=False))


def global_pool(x: Tensor, mode: str) -> Tensor:
    """Collapse (H, W) to a per-channel scalar.

    "gap" is the plain spatial mean. "pann" follows the CNN6/CNN14 reference
    head: mean over frequency, then mean-plus-max over time.
    """
    _check_rank(x, 4, "pool input")
    xa = x.array.astype(np.float64, copy=False)
    if mode == "gap":
        out = xa.mean(axis=(2, 3))
    elif mode == "pann":
        t = xa.mean(axis=3)  # (N, C, H)
        out = t.mean(axis=2) + t.max(axis=2)
    else:
        raise ConfigError(f"unknown global pooling mode {mode!r}")
    return Tensor(out.astype(x.dtype, copy=False))


def global_pool_backward(grad_out: Tensor, x: Tensor, mode: str) -> Tensor:
    _check_rank(x, 4, "pool input")
    n, c, h, w = x.shape
    if grad_out.shape != (n, c):
        raise ShapeError(f"grad shape {grad_out.shape} != pooled shape {(n, c)}")
    go = grad_out.array.astype(np.float64, copy=False)
    if mode == "gap":
        gx = np.broadcast_to(go[:, :, None, None] / (h * w), x.shape).copy()
    elif mode == "pann":
        t = x.array.astype(np.float64, copy=False).mean(axis=3)  # (N, C, H)
        gt = np.broadcast_to(go[:, :, None] / h, (n, c, h)).copy()
        idx = t.argmax(axis=2)  # first max wins ties, matching forward
        ni, ci = np.meshgrid(np.arange(n), np.arange(c), indexing="ij")
        gt[ni, ci, idx] += go
        gx = np.broadcast_to(gt[:, :, :, None] / w, x.shape).copy()
    else:
        raise ConfigError(f"unknown global pooling mode {mode!r}")
    return Tensor(gx.astype(x.dtype, copy=False))


# ---------------------------------------------------------------------------
# linear / drop path
# ---------------------------------------------------------------------------


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map x @ w.T + b for x of shape (N, D), w of shape (O, D)."""
    _check_rank(x, 2, "linear input")
    if len(w.shape) != 2 or w.shape[1] != x.shape[1]:
        raise ShapeError(f"weight {w.shape} incompatible with input {x.shape}")
    if b.shape != (w.shape[0],):
        raise ShapeError(f"bias length {b.shape} != out dim {w.shape[0]}")
    out = x.array.astype(np.float64, copy=False) @ w.array.T.astype(np.float64, copy=False)
    out += b.array.astype(np.float64, copy=False)
    runtime_macs.add(x.shape[0] * w.shape[0] * w.shape[1])
    return Tensor(out.astype(x.dtype, copy=False))


def linear_backward(grad_out: Tensor, x: Tensor, w: Tensor):
    if grad_out.shape != (x.shape[0], w.shape[0]):
        raise ShapeError(f"grad shape {grad_out.shape} != {(x.shape[0], w.shape[0])}")
    go = grad_out.array.astype(np.float64, copy=False)
    xa = x.array.astype(np.float64, copy=False)
    gx = go @ w.array.astype(np.float64, copy=False)
    gw = go.T @ xa
    gb = go.sum(axis=0)
    return (
        Tensor(gx.astype(x.dtype, copy=False)),
        Tensor(gw.astype(w.dtype, copy=False)),
        Tensor(gb.astype(w.dtype, copy=False)),
    )


def drop_path_mask(batch: int, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Per-sample keep mask for stochastic depth."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"drop path rate must be in [0, 1), got {rate}")
    return (rng.random(batch) >= rate).astype(np.float64)


def drop_path(
    x: Tensor, rate: float, training: bool, rng: np.random.Generator | None = None
) -> Tensor:
    """Per-sample residual-branch dropping.

    Inference (or rate 0) is the identity; in training each sample's branch
    output is zeroed with probability `rate`, kept samples scaled by
    1/(1-rate) to preserve the expectation.
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"drop path rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ConfigError("training-mode drop_path needs an rng")
    mask = drop_path_mask(x.shape[0], rate, rng)
    return apply_drop_mask(x, mask, rate)


def apply_drop_mask(x: Tensor, mask: np.ndarray, rate: float) -> Tensor:
    shape = (x.shape[0],) + (1,) * (len(x.shape) - 1)
    scaled = mask.reshape(shape) / (1.0 - rate)
    return Tensor((x.array * scaled).astype(x.dtype, copy=False))


def drop_path_backward(grad_out: Tensor, mask: np.ndarray, rate: float) -> Tensor:
    return apply_drop_mask(grad_out, mask, rate)
