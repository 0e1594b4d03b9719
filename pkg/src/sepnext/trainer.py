"""Optimization loop: BCE objective, decoupled-decay Adam, one-cycle schedule.

The training entry point here is the small-scale overfit run used as an
end-to-end sanity gate; it drives the exact forward/backward/optimizer code
a full-scale run would use, just on the synthetic tone dataset.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checkpoint, ops
from .errors import ConfigError, EngineError, TrainDiverged
from .evalkit import mean_average_precision
from .layers import Module, Param
from .models import build
from .tensor import Tensor
from .toydata import ToyConfig, make_dataset, toy_model_config

LOSS_CLAMP = 1e-7


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 300
    batch_size: int = 16
    max_lr: float = 4e-3
    weight_decay: float = 0.05
    warmup_frac: float = 0.3
    div_factor: float = 25.0
    final_div_factor: float = 1e4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    log_every: int = 25

    def __post_init__(self) -> None:
        if self.steps < 1 or self.batch_size < 1:
            raise ConfigError("steps and batch_size must be >= 1")
        if self.max_lr <= 0:
            raise ConfigError("max_lr must be > 0")
        if not 0.0 <= self.warmup_frac <= 1.0:
            raise ConfigError("warmup_frac must lie in [0, 1]")
        if self.div_factor < 1 or self.final_div_factor < 1:
            raise ConfigError("divisor factors must be >= 1")


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(TrainConfig)}


def parse_train_config(path: str | Path) -> TrainConfig:
    """Read `key=value` lines; `#` starts a comment, blank lines are skipped."""
    values: dict[str, object] = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in _FIELD_TYPES:
                known = ", ".join(sorted(_FIELD_TYPES))
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}; known keys: {known}")
            if key in values:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            kind = _FIELD_TYPES[key]
            try:
                values[key] = int(val) if kind in (int, "int") else float(val)
            except ValueError:
                raise ConfigError(
                    f"{path}:{lineno}: cannot parse {val!r} as {kind} for {key!r}"
                ) from None
    return TrainConfig(**values)  # type: ignore[arg-type]


def one_cycle_lr(
    step: int,
    total_steps: int,
    max_lr: float,
    warmup_frac: float = 0.3,
    div_factor: float = 25.0,
    final_div_factor: float = 1e4,
) -> float:
    """Cosine ramp from max_lr/div_factor up to max_lr, then a cosine decay
    to max_lr/final_div_factor at the last step. Steps are 0-based; the peak
    lands on round(warmup_frac * total_steps).
    """
    if total_steps < 1:
        raise ConfigError("total_steps must be >= 1")
    if not 0 <= step < total_steps:
        raise ConfigError(f"step {step} outside [0, {total_steps})")
    if total_steps == 1:
        return max_lr
    peak = int(round(warmup_frac * total_steps))
    peak = min(peak, total_steps - 1)
    start = max_lr / div_factor
    final = max_lr / final_div_factor
    if step <= peak:
        t = 1.0 if peak == 0 else step / peak
        return start + (max_lr - start) * 0.5 * (1.0 - math.cos(math.pi * t))
    t = (step - peak) / (total_steps - 1 - peak)
    return final + (max_lr - final) * 0.5 * (1.0 + math.cos(math.pi * t))


def bce_loss(probs: Tensor, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross entropy over all (sample, class) cells.

    Probabilities are clamped to [1e-7, 1 - 1e-7] inside the log only; the
    returned gradient is taken with respect to the logits that produced
    `probs`, i.e. (p - t) / (N * C).
    """
    p = probs.array.astype(np.float64, copy=False)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape:
        raise ConfigError(f"probs {p.shape} and targets {t.shape} differ")
    pc = np.clip(p, LOSS_CLAMP, 1.0 - LOSS_CLAMP)
    loss = float(-(t * np.log(pc) + (1.0 - t) * np.log(1.0 - pc)).mean())
    grad_logits = ((p - t) / p.size).astype(np.float32)
    return loss, grad_logits


class AdamW:
    """Adam with decoupled weight decay; decay skips params flagged decay=False."""

    def __init__(
        self,
        model: Module,
        weight_decay: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        self.entries: list[tuple[str, Param]] = list(model.named_params())
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {n: np.zeros(p.value.shape, np.float64) for n, p in self.entries}
        self._v = {n: np.zeros(p.value.shape, np.float64) for n, p in self.entries}

    def step(self, lr: float) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, p in self.entries:
            if p.grad is None:
                raise EngineError(f"no gradient accumulated for {name}")
            g = p.grad.astype(np.float64, copy=False)
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            val = p.value.astype(np.float64)
            if p.decay and self.weight_decay > 0.0:
                val -= lr * self.weight_decay * val
            val -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.value[...] = val.astype(p.value.dtype)


def grad_global_norm(model: Module) -> float:
    total = 0.0
    for _, p in model.named_params():
        if p.grad is not None:
            total += float(np.sum(p.grad.astype(np.float64) ** 2))
    return math.sqrt(total)


def _predict_all(model: Module, features: Tensor, batch: int) -> np.ndarray:
    model.train(False)
    outs = []
    n = features.shape[0]
    for i in range(0, n, batch):
        x = Tensor(np.ascontiguousarray(features.array[i : i + batch]))
        outs.append(model.predict(x).array)
    return np.concatenate(outs, axis=0)


def train_toy(cfg: TrainConfig, out_dir: str | Path) -> dict[str, object]:
    """Overfit the tone dataset; returns a summary with the final train mAP.

    Writes `history.csv` (step,lr,loss) and overwrites `latest.acnx` at each
    epoch boundary and at the end. Non-finite loss or gradients raise
    TrainDiverged with the step, learning rate, and gradient norm.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    data = make_dataset(ToyConfig(), seed=cfg.seed)
    model = build(toy_model_config(), seed=cfg.seed)
    model.train(True)
    model.set_rng(rng)
    opt = AdamW(model, cfg.weight_decay, cfg.beta1, cfg.beta2, cfg.eps)

    n = data.features.shape[0]
    order = rng.permutation(n)
    cursor = 0
    ckpt_path = out_dir / "latest.acnx"
    history: list[tuple[int, float, float]] = []

    for step in range(cfg.steps):
        lr = one_cycle_lr(
            step,
            cfg.steps,
            cfg.max_lr,
            cfg.warmup_frac,
            cfg.div_factor,
            cfg.final_div_factor,
        )
        if cursor + cfg.batch_size > n:
            order = rng.permutation(n)
            cursor = 0
            checkpoint.save_model(ckpt_path, model)
        idx = order[cursor : cursor + cfg.batch_size]
        cursor += cfg.batch_size

        x = Tensor(np.ascontiguousarray(data.features.array[idx]))
        t = data.targets[idx]
        logits = model(x)
        probs = ops.sigmoid(logits)
        loss, grad_logits = bce_loss(probs, t)
        if not math.isfinite(loss):
            raise TrainDiverged(
                f"non-finite loss at step {step} (lr={lr:.3e}, "
                f"last grad norm={grad_global_norm(model):.3e})"
            )
        model.zero_grad()
        model.backward(Tensor(grad_logits))
        gnorm = grad_global_norm(model)
        if not math.isfinite(gnorm):
            raise TrainDiverged(
                f"non-finite gradient at step {step} (lr={lr:.3e}, loss={loss:.4f})"
            )
        opt.step(lr)
        history.append((step, lr, loss))

    checkpoint.save_model(ckpt_path, model)
    with open(out_dir / "history.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "lr", "loss"])
        for step, lr, loss in history:
            w.writerow([step, f"{lr:.8e}", f"{loss:.8f}"])

    probs = _predict_all(model, data.features, cfg.batch_size)
    train_map = mean_average_precision(probs, data.targets)
    return {
        "steps": cfg.steps,
        "final_loss": history[-1][2],
        "train_map": train_map,
        "history_path": str(out_dir / "history.csv"),
        "checkpoint_path": str(ckpt_path),
    }
