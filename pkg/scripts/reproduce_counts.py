#!/usr/bin/env python3
"""Recompute every model's parameter and MAC totals from closed-form
arithmetic and diff them against the library.

The tables below restate the six architectures by hand — channel widths,
kernel sizes, pool placement, feature grids — without touching the layer
code, so a regression in either the configs or the counting logic shows up
as a mismatch. Exits nonzero on any disagreement.

MAC convention (must match sepnext.profiler): one MAC per multiply-add;
conv = C_out * H_out * W_out * (C_in / groups) * kh * kw, linear = out * in,
norms / activations / pooling are free, and the log-mel frontend is excluded.
"""

from __future__ import annotations

import sys

from sepnext.models import MODEL_CONFIGS, build
from sepnext.profiler import count_macs, count_params


def conv_params(c_in: int, c_out: int, k: int, groups: int = 1) -> int:
    # weight (C_out, C_in/g, k, k) plus bias
    return c_out * (c_in // groups) * k * k + c_out


def conv_macs(c_in: int, c_out: int, k: int, h: int, w: int, groups: int = 1) -> int:
    return c_out * h * w * (c_in // groups) * k * k


def norm_params(c: int) -> int:
    return 2 * c  # gamma + beta; running stats are buffers, not parameters


def linear_params(d_in: int, d_out: int) -> int:
    return d_out * d_in + d_out


# ---------------------------------------------------------------- cnn family
#
# melnorm -> blocks (2x2 average pool after selected blocks) -> pooled
# feature of width channels[-1] -> fc1 -> ReLU -> fc2. Feature grids start
# at frames x 64 and halve (floor) after each pooled block.

CNN6_CHANNELS = (64, 128, 256, 512)
CNN14_CHANNELS = (64, 128, 256, 512, 1024, 2048)


def _cnn_grids(frames: int, mels: int, n_blocks: int, pool_after: tuple[int, ...]):
    """Grid each block *runs at* (pooling happens after the block)."""
    h, w = frames, mels
    grids = []
    for i in range(n_blocks):
        grids.append((h, w))
        if i in pool_after:
            h, w = h // 2, w // 2
    return grids


def _cnn_head_params(width: int, classes: int) -> int:
    return linear_params(width, width) + linear_params(width, classes)


def _cnn_head_macs(width: int, classes: int) -> int:
    return width * width + classes * width


def cnn6_counts(frames: int = 1000, mels: int = 64, classes: int = 527):
    params = norm_params(mels)
    macs = 0
    c_in = 1
    for (h, w), c_out in zip(_cnn_grids(frames, mels, 4, (0, 1, 2)), CNN6_CHANNELS):
        params += conv_params(c_in, c_out, 5) + norm_params(c_out)
        macs += conv_macs(c_in, c_out, 5, h, w)
        c_in = c_out
    return params + _cnn_head_params(c_in, classes), macs + _cnn_head_macs(c_in, classes)


def cnn6next_counts(frames: int = 1000, mels: int = 64, classes: int = 527):
    # block = 7x7 conv (dense for block 0, depthwise after) -> layer norm
    # -> 1x1 expand to 4x width -> GELU -> 1x1 project back
    params = norm_params(mels)
    macs = 0
    c_in = 1
    for i, ((h, w), c_out) in enumerate(
        zip(_cnn_grids(frames, mels, 4, (0, 1, 2)), CNN6_CHANNELS)
    ):
        g = c_in if i > 0 else 1
        params += (
            conv_params(c_in, c_out, 7, groups=g)
            + norm_params(c_out)
            + conv_params(c_out, 4 * c_out, 1)
            + conv_params(4 * c_out, c_out, 1)
        )
        macs += (
            conv_macs(c_in, c_out, 7, h, w, groups=g)
            + conv_macs(c_out, 4 * c_out, 1, h, w)
            + conv_macs(4 * c_out, c_out, 1, h, w)
        )
        c_in = c_out
    return params + _cnn_head_params(c_in, classes), macs + _cnn_head_macs(c_in, classes)


def cnn14_counts(separable: bool, frames: int = 1000, mels: int = 64, classes: int = 527):
    # block = two 3x3 conv+BN+ReLU stages; the second conv is depthwise in
    # the separable variant
    params = norm_params(mels)
    macs = 0
    c_in = 1
    for (h, w), c_out in zip(
        _cnn_grids(frames, mels, 6, (0, 1, 2, 3, 4, 5)), CNN14_CHANNELS
    ):
        g2 = c_out if separable else 1
        params += (
            conv_params(c_in, c_out, 3)
            + norm_params(c_out)
            + conv_params(c_out, c_out, 3, groups=g2)
            + norm_params(c_out)
        )
        macs += conv_macs(c_in, c_out, 3, h, w) + conv_macs(c_out, c_out, 3, h, w, groups=g2)
        c_in = c_out
    return params + _cnn_head_params(c_in, classes), macs + _cnn_head_macs(c_in, classes)


# ----------------------------------------------------------- convnext family
#
# 4x4 stride-4 patch stem (+norm), four stages of residual blocks, a
# norm + 2x2 stride-2 conv between stages, then GAP -> norm -> fc.


def convnext_block_params(dim: int) -> int:
    # 7x7 depthwise + norm + two 1x1 convs at 4x expansion + layer scale:
    # collapses to 8*dim^2 + 58*dim
    return (
        conv_params(dim, dim, 7, groups=dim)
        + norm_params(dim)
        + conv_params(dim, 4 * dim, 1)
        + conv_params(4 * dim, dim, 1)
        + dim  # layer scale
    )


def convnext_counts(
    depths: tuple[int, ...],
    dims: tuple[int, ...] = (96, 192, 384, 768),
    frames: int = 1008,
    mels: int = 224,
    classes: int = 527,
):
    h, w = frames // 4, mels // 4
    params = conv_params(1, dims[0], 4) + norm_params(dims[0])
    macs = conv_macs(1, dims[0], 4, h, w)
    for i, (depth, dim) in enumerate(zip(depths, dims)):
        per_block = (
            conv_macs(dim, dim, 7, h, w, groups=dim)
            + conv_macs(dim, 4 * dim, 1, h, w)
            + conv_macs(4 * dim, dim, 1, h, w)
        )
        params += depth * convnext_block_params(dim)
        macs += depth * per_block
        if i + 1 < len(dims):
            h, w = h // 2, w // 2
            params += norm_params(dim) + conv_params(dim, dims[i + 1], 2)
            macs += conv_macs(dim, dims[i + 1], 2, h, w)
    params += norm_params(dims[-1]) + linear_params(dims[-1], classes)
    macs += classes * dims[-1]
    return params, macs


HAND = {
    "cnn6": cnn6_counts(),
    "cnn6next": cnn6next_counts(),
    "cnn14": cnn14_counts(separable=False),
    "cnn14sep": cnn14_counts(separable=True),
    "convnext-tiny": convnext_counts((3, 3, 9, 3)),
    "convnext-small": convnext_counts((3, 3, 27, 3)),
}


def main() -> int:
    rows = []
    bad = 0
    for name in MODEL_CONFIGS:
        model = build(name)
        lib = (count_params(model), count_macs(model))
        hand = HAND[name]
        ok = lib == hand
        bad += not ok
        rows.append((name, hand, lib, ok))

    print(f"{'model':<16} {'params(hand)':>14} {'params(lib)':>14} "
          f"{'macs(hand)':>16} {'macs(lib)':>16}  status")
    for name, hand, lib, ok in rows:
        print(f"{name:<16} {hand[0]:>14,} {lib[0]:>14,} "
              f"{hand[1]:>16,} {lib[1]:>16,}  {'ok' if ok else 'MISMATCH'}")
    if bad:
        print(f"\n{bad} model(s) disagree", file=sys.stderr)
    return 1 if bad else 0


if __name__ == "__main__":
    raise SystemExit(main())
