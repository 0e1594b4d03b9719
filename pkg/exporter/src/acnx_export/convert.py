"""Archive loading and table-driven tensor conversion."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from sepnext.models import build

from .errors import ExportError
from .tables import LINEAR_TO_1X1, ZEROS, MapRow, rows_for
from .writer import write_acnx


def load_source(path: str | Path) -> dict[str, np.ndarray]:
    """Read a PyTorch checkpoint into plain {name: array}.

    Released archives wrap the tensor dict under "model" or "state_dict";
    bare state dicts pass through. Non-tensor entries are dropped.
    """
    import torch

    obj = torch.load(path, map_location="cpu", weights_only=True)
    if isinstance(obj, dict):
        for key in ("model", "state_dict"):
            inner = obj.get(key)
            if isinstance(inner, dict) and inner:
                obj = inner
                break
    if not isinstance(obj, dict):
        raise ExportError(f"{path}: expected a tensor dictionary, got {type(obj).__name__}")
    out: dict[str, np.ndarray] = {}
    for name, value in obj.items():
        if isinstance(value, torch.Tensor):
            out[str(name)] = value.detach().cpu().numpy()
    if not out:
        raise ExportError(f"{path}: no tensors found")
    return out


@dataclass
class Conversion:
    """Converted state plus the row-by-row audit trail."""

    state: dict[str, np.ndarray]
    report: list[tuple[str, str, str, str, str]] = field(default_factory=list)
    mapped: int = 0
    zero_filled: int = 0
    unmapped_source: list[str] = field(default_factory=list)


def _shape_str(shape: tuple[int, ...]) -> str:
    return "x".join(str(d) for d in shape) if shape else "scalar"


def convert(model_name: str, source: dict[str, np.ndarray]) -> Conversion:
    """Map source tensors onto the model's full canonical state.

    Raises if the table does not cover the canonical parameter list
    exactly, if an expected source tensor is absent, or if any tensor's
    shape disagrees with the model — a silently misaligned export is the
    one outcome this tool must never produce.
    """
    rows = rows_for(model_name)
    canonical_shapes = {name: arr.shape for name, arr in build(model_name).named_state()}

    seen: set[str] = set()
    for row in rows:
        if row.canonical in seen:
            raise ExportError(f"mapping table lists {row.canonical!r} twice")
        seen.add(row.canonical)
    missing = sorted(set(canonical_shapes) - seen)
    extra = sorted(seen - set(canonical_shapes))
    if missing or extra:
        raise ExportError(
            f"mapping table does not cover {model_name}: "
            f"unlisted model tensors {missing[:5]}, stale rows {extra[:5]}"
        )

    conv = Conversion(state={})
    for row in rows:
        want = tuple(canonical_shapes[row.canonical])
        if row.transform == ZEROS:
            conv.state[row.canonical] = np.zeros(want, dtype=np.float32)
            conv.zero_filled += 1
            conv.report.append(("-", row.canonical, row.transform, _shape_str(want), "zero-filled"))
            continue
        if row.source not in source:
            raise ExportError(
                f"source tensor {row.source!r} not found (needed for {row.canonical})"
            )
        arr = np.asarray(source[row.source])
        if row.transform == LINEAR_TO_1X1:
            if arr.ndim != 2:
                raise ExportError(
                    f"{row.source}: expected a 2-D linear kernel, got shape {arr.shape}"
                )
            arr = arr.reshape(arr.shape + (1, 1))
        if tuple(arr.shape) != want:
            raise ExportError(
                f"shape conflict on {row.canonical}: source {row.source} gives "
                f"{tuple(arr.shape)}, model expects {want}"
            )
        conv.state[row.canonical] = arr.astype(np.float32, copy=False)
        conv.mapped += 1
        conv.report.append(
            (row.source, row.canonical, row.transform, _shape_str(want), "mapped")
        )

    used = {row.source for row in rows if row.source}
    for name in sorted(set(source) - used):
        conv.unmapped_source.append(name)
        conv.report.append(
            (name, "-", "-", _shape_str(tuple(np.asarray(source[name]).shape)), "unmapped-source")
        )
    return conv


def write_report(path: str | Path, conv: Conversion) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["source", "canonical", "transform", "shape", "status"])
        out.writerows(conv.report)


def export(
    src: str | Path,
    model_name: str,
    out_path: str | Path,
    report_path: str | Path | None = None,
) -> Conversion:
    """Full pipeline: read, map, write archive + mapping report CSV."""
    conv = convert(model_name, load_source(src))
    write_acnx(out_path, conv.state)
    write_report(report_path or f"{out_path}.map.csv", conv)
    return conv
