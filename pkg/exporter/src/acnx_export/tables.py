"""Per-model source-to-canonical tensor name tables.

Every convertible tensor is one explicit row; nothing is pattern-matched
against whatever names happen to appear in an archive. If a released
checkpoint names things differently, edit the row builders — this file is
the single adaptation point.

Source naming conventions the rows encode:

* cnn6 / cnn14 / cnn14sep follow the PANN reference (``bn0``,
  ``conv_block{n}.conv1`` / ``bn1`` / ``conv2`` / ``bn2``, ``fc1``,
  ``fc_audioset``). Those convolutions carry no bias term, so the bias
  rows are zero-filled.
* cnn6next keeps the PANN skeleton but each block holds the
  ConvNeXt-style pieces (``conv``, ``norm``, ``pwconv1``, ``pwconv2``)
  with the pointwise layers stored as 2-D linear kernels.
* convnext-tiny / convnext-small follow the reference ConvNeXt layout
  (``downsample_layers.{i}``, ``stages.{s}.{b}``, final ``norm``,
  ``head``); pointwise kernels are 2-D, layer scale is ``gamma``.
"""

from __future__ import annotations

from dataclasses import dataclass

COPY = "copy"  # layouts already agree
LINEAR_TO_1X1 = "linear_to_1x1"  # (O, I) linear kernel -> (O, I, 1, 1) conv
ZEROS = "zeros"  # no source tensor; canonical entry is zero-filled


@dataclass(frozen=True)
class MapRow:
    source: str  # "" for synthesized (zero-filled) rows
    canonical: str
    transform: str = COPY


def _bn(src: str, dst: str) -> list[MapRow]:
    return [
        MapRow(f"{src}.weight", f"{dst}.gamma"),
        MapRow(f"{src}.bias", f"{dst}.beta"),
        MapRow(f"{src}.running_mean", f"{dst}.running_mean"),
        MapRow(f"{src}.running_var", f"{dst}.running_var"),
    ]


def _ln(src: str, dst: str) -> list[MapRow]:
    return [
        MapRow(f"{src}.weight", f"{dst}.gamma"),
        MapRow(f"{src}.bias", f"{dst}.beta"),
    ]


def _cnn_head() -> list[MapRow]:
    return [
        MapRow("fc1.weight", "head.fc1.weight"),
        MapRow("fc1.bias", "head.fc1.bias"),
        MapRow("fc_audioset.weight", "head.fc2.weight"),
        MapRow("fc_audioset.bias", "head.fc2.bias"),
    ]


def cnn6_rows() -> list[MapRow]:
    rows = _bn("bn0", "melnorm")
    for i in range(4):
        src, dst = f"conv_block{i + 1}", f"blocks.{i}"
        rows.append(MapRow(f"{src}.conv1.weight", f"{dst}.conv.weight"))
        rows.append(MapRow("", f"{dst}.conv.bias", ZEROS))
        rows += _bn(f"{src}.bn1", f"{dst}.bn")
    return rows + _cnn_head()


def cnn14_rows() -> list[MapRow]:
    # shared by cnn14sep: names and ranks agree, only the conv2 kernel
    # shapes differ, and shapes are checked against the live model anyway
    rows = _bn("bn0", "melnorm")
    for i in range(6):
        src, dst = f"conv_block{i + 1}", f"blocks.{i}"
        rows.append(MapRow(f"{src}.conv1.weight", f"{dst}.conv1.weight"))
        rows.append(MapRow("", f"{dst}.conv1.bias", ZEROS))
        rows += _bn(f"{src}.bn1", f"{dst}.bn1")
        rows.append(MapRow(f"{src}.conv2.weight", f"{dst}.conv2.weight"))
        rows.append(MapRow("", f"{dst}.conv2.bias", ZEROS))
        rows += _bn(f"{src}.bn2", f"{dst}.bn2")
    return rows + _cnn_head()


def cnn6next_rows() -> list[MapRow]:
    rows = _bn("bn0", "melnorm")
    for i in range(4):
        src, dst = f"conv_block{i + 1}", f"blocks.{i}"
        rows.append(MapRow(f"{src}.conv.weight", f"{dst}.conv.weight"))
        rows.append(MapRow(f"{src}.conv.bias", f"{dst}.conv.bias"))
        rows += _ln(f"{src}.norm", f"{dst}.norm")
        rows.append(MapRow(f"{src}.pwconv1.weight", f"{dst}.pwconv1.weight", LINEAR_TO_1X1))
        rows.append(MapRow(f"{src}.pwconv1.bias", f"{dst}.pwconv1.bias"))
        rows.append(MapRow(f"{src}.pwconv2.weight", f"{dst}.pwconv2.weight", LINEAR_TO_1X1))
        rows.append(MapRow(f"{src}.pwconv2.bias", f"{dst}.pwconv2.bias"))
    return rows + _cnn_head()


def convnext_rows(depths: tuple[int, ...]) -> list[MapRow]:
    rows = [
        MapRow("downsample_layers.0.0.weight", "stem.conv.weight"),
        MapRow("downsample_layers.0.0.bias", "stem.conv.bias"),
    ]
    rows += _ln("downsample_layers.0.1", "stem.norm")
    for s, depth in enumerate(depths):
        for b in range(depth):
            src, dst = f"stages.{s}.{b}", f"stages.{s}.blocks.{b}"
            rows.append(MapRow(f"{src}.dwconv.weight", f"{dst}.dwconv.weight"))
            rows.append(MapRow(f"{src}.dwconv.bias", f"{dst}.dwconv.bias"))
            rows += _ln(f"{src}.norm", f"{dst}.norm")
            rows.append(MapRow(f"{src}.pwconv1.weight", f"{dst}.pwconv1.weight", LINEAR_TO_1X1))
            rows.append(MapRow(f"{src}.pwconv1.bias", f"{dst}.pwconv1.bias"))
            rows.append(MapRow(f"{src}.pwconv2.weight", f"{dst}.pwconv2.weight", LINEAR_TO_1X1))
            rows.append(MapRow(f"{src}.pwconv2.bias", f"{dst}.pwconv2.bias"))
            rows.append(MapRow(f"{src}.gamma", f"{dst}.layerscale"))
        if s + 1 < len(depths):
            rows += _ln(f"downsample_layers.{s + 1}.0", f"downsamples.{s}.norm")
            rows.append(MapRow(f"downsample_layers.{s + 1}.1.weight", f"downsamples.{s}.conv.weight"))
            rows.append(MapRow(f"downsample_layers.{s + 1}.1.bias", f"downsamples.{s}.conv.bias"))
    rows += _ln("norm", "head.norm")
    rows.append(MapRow("head.weight", "head.fc.weight"))
    rows.append(MapRow("head.bias", "head.fc.bias"))
    return rows


TABLES: dict[str, object] = {
    "cnn6": cnn6_rows,
    "cnn6next": cnn6next_rows,
    "cnn14": cnn14_rows,
    "cnn14sep": cnn14_rows,
    "convnext-tiny": lambda: convnext_rows((3, 3, 9, 3)),
    "convnext-small": lambda: convnext_rows((3, 3, 27, 3)),
}


def rows_for(model_name: str) -> list[MapRow]:
    from .errors import ExportError

    if model_name not in TABLES:
        known = ", ".join(sorted(TABLES))
        raise ExportError(f"no mapping table for {model_name!r} (known: {known})")
    return TABLES[model_name]()
