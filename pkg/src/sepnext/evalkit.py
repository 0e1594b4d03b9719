"""Multi-label tagging metrics: average precision, ROC-AUC, d-prime.

Conventions match the standard audio-tagging evaluation protocol:

* AP is step-interpolated: the mean of precision-at-k over the positions of
  the positives, with ties broken by original order (stable descending sort).
* AUC uses the rank-sum formulation with midranks for tied scores, which is
  exactly the probability that a random positive outranks a random negative
  (ties count half).
* d' = sqrt(2) * probit(AUC); AUC of 0 or 1 maps to -inf / +inf.
* Macro averages skip classes with no positives (and AUC additionally needs
  a negative); skipped classes are counted and reported, never imputed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .errors import ConfigError, ShapeError

SQRT2 = math.sqrt(2.0)
SQRT_2PI = math.sqrt(2.0 * math.pi)

# Rational minimax coefficients for the probit approximation (central and
# tail regions); a Halley step on erfc then polishes to ~1e-15.
_PROBIT_A = (
    -3.969683028665376e01,
    2.209460984245205e02,
    -2.759285104469687e02,
    1.383577518672690e02,
    -3.066479806614716e01,
    2.506628277459239e00,
)
_PROBIT_B = (
    -5.447609879822406e01,
    1.615858368580409e02,
    -1.556989798598866e02,
    6.680131188771972e01,
    -1.328068155288572e01,
)
_PROBIT_C = (
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e00,
    -2.549732539343734e00,
    4.374664141464968e00,
    2.938163982698783e00,
)
_PROBIT_D = (
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e00,
    3.754408661907416e00,
)
_PROBIT_SPLIT = 0.02425


def inv_norm_cdf(p: float) -> float:
    """Inverse standard normal CDF, accurate to ~1e-15 over (0, 1)."""
    if math.isnan(p):
        raise ConfigError("probit of NaN")
    if p <= 0.0:
        return -math.inf
    if p >= 1.0:
        return math.inf
    a, b, c, d = _PROBIT_A, _PROBIT_B, _PROBIT_C, _PROBIT_D
    if p < _PROBIT_SPLIT:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / (
            (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        )
    elif p > 1.0 - _PROBIT_SPLIT:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / (
            (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        )
    else:
        q = p - 0.5
        r = q * q
        x = (
            (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5])
            * q
            / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
        )
    # Halley refinement against whichever tail keeps the residual
    # well-conditioned. For p > 0.5 the lower-tail residual Phi(x) - p
    # subtracts two values near 1 and loses every significant digit, so
    # refine the upper tail instead; 1 - p is exact for p in [0.5, 1]
    # (Sterbenz) and erfc of a positive argument has full relative accuracy.
    if p > 0.5:
        q = 1.0 - p
        for _ in range(2):
            e = 0.5 * math.erfc(x / SQRT2) - q
            u = e * SQRT_2PI * math.exp(0.5 * x * x)
            x += u / (1.0 - 0.5 * x * u)
    else:
        for _ in range(2):
            e = 0.5 * math.erfc(-x / SQRT2) - p
            u = e * SQRT_2PI * math.exp(0.5 * x * x)
            x -= u / (1.0 + 0.5 * x * u)
    return x


def d_prime(auc: float) -> float:
    """Detection-theory separation index for a given AUC."""
    if math.isnan(auc):
        raise ConfigError("d_prime of NaN")
    if not 0.0 <= auc <= 1.0:
        raise ConfigError(f"AUC must lie in [0, 1], got {auc}")
    return SQRT2 * inv_norm_cdf(auc)


def _validate_pair(scores: np.ndarray, labels: np.ndarray) -> None:
    if scores.shape != labels.shape:
        raise ShapeError(f"scores {scores.shape} and labels {labels.shape} differ")
    if scores.ndim != 1:
        raise ShapeError(f"per-class metrics take 1-D arrays, got {scores.shape}")


def average_precision(scores: np.ndarray, labels: np.ndarray) -> float | None:
    """Step-interpolated AP; None when the class has no positives."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    _validate_pair(scores, labels)
    pos = labels > 0.5
    npos = int(pos.sum())
    if npos == 0:
        return None
    order = np.argsort(-scores, kind="stable")
    hits = pos[order]
    cum = np.cumsum(hits)
    ranks = np.arange(1, len(scores) + 1)
    prec_at_hits = cum[hits] / ranks[hits]
    return float(prec_at_hits.sum() / npos)


def roc_auc(scores: np.ndarray, labels: np.ndarray) -> float | None:
    """Rank-sum AUC with midranks for ties; None without both label values."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    _validate_pair(scores, labels)
    pos = labels > 0.5
    npos = int(pos.sum())
    nneg = len(scores) - npos
    if npos == 0 or nneg == 0:
        return None
    ranks = rankdata(scores)  # average method = midranks
    rank_sum = float(ranks[pos].sum())
    return (rank_sum - npos * (npos + 1) / 2.0) / (npos * nneg)


@dataclass
class EvalReport:
    """Per-class and macro-averaged metrics over an evaluation set."""

    ap: list[float | None]
    auc: list[float | None]
    dprime: list[float | None]
    positives: list[int]
    macro_ap: float
    macro_auc: float
    macro_dprime: float  # mean of per-class d'
    dprime_of_macro_auc: float
    n_classes: int
    n_scored: int
    n_skipped: int

    def summary_lines(self) -> list[str]:
        return [
            f"classes={self.n_classes}",
            f"classes_scored={self.n_scored}",
            f"classes_skipped={self.n_skipped}",
            f"macro_ap={self.macro_ap:.6f}",
            f"macro_auc={self.macro_auc:.6f}",
            f"macro_dprime={self.macro_dprime:.6f}",
            f"dprime_of_macro_auc={self.dprime_of_macro_auc:.6f}",
        ]

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["class_index", "positives", "ap", "auc", "d_prime"])
            for i in range(self.n_classes):
                w.writerow(
                    [
                        i,
                        self.positives[i],
                        _fmt(self.ap[i]),
                        _fmt(self.auc[i]),
                        _fmt(self.dprime[i]),
                    ]
                )


def _fmt(v: float | None) -> str:
    if v is None:
        return ""
    return f"{v:.6f}"


def evaluate(scores: np.ndarray, targets: np.ndarray) -> EvalReport:
    """Score a (N, C) probability matrix against binary (N, C) targets."""
    scores = np.asarray(scores, dtype=np.float64)
    targets = np.asarray(targets)
    if scores.ndim != 2 or scores.shape != targets.shape:
        raise ShapeError(
            f"need matching (N, C) matrices, got {scores.shape} and {targets.shape}"
        )
    n_classes = scores.shape[1]
    ap: list[float | None] = []
    auc: list[float | None] = []
    dp: list[float | None] = []
    positives: list[int] = []
    for c in range(n_classes):
        positives.append(int((targets[:, c] > 0.5).sum()))
        ap.append(average_precision(scores[:, c], targets[:, c]))
        a = roc_auc(scores[:, c], targets[:, c])
        auc.append(a)
        dp.append(None if a is None else d_prime(a))
    ap_vals = [v for v in ap if v is not None]
    auc_vals = [v for v in auc if v is not None]
    dp_vals = [v for v in dp if v is not None]
    if not ap_vals:
        raise ConfigError("no class has positives; nothing to evaluate")
    macro_ap = float(np.mean(ap_vals))
    macro_auc = float(np.mean(auc_vals)) if auc_vals else float("nan")
    macro_dp = float(np.mean(dp_vals)) if dp_vals else float("nan")
    return EvalReport(
        ap=ap,
        auc=auc,
        dprime=dp,
        positives=positives,
        macro_ap=macro_ap,
        macro_auc=macro_auc,
        macro_dprime=macro_dp,
        dprime_of_macro_auc=d_prime(macro_auc) if auc_vals else float("nan"),
        n_classes=n_classes,
        n_scored=len(ap_vals),
        n_skipped=n_classes - len(ap_vals),
    )


def mean_average_precision(scores: np.ndarray, targets: np.ndarray) -> float:
    return evaluate(scores, targets).macro_ap


# ---------------------------------------------------------------------------
# manifest and class map files
# ---------------------------------------------------------------------------


@dataclass
class Manifest:
    """Evaluation roster: wav paths with their multi-label class ids."""

    paths: list[Path]
    labels: list[list[int]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.paths)

    def target_matrix(self, n_classes: int) -> np.ndarray:
        t = np.zeros((len(self.paths), n_classes), dtype=np.float32)
        for i, ids in enumerate(self.labels):
            for c in ids:
                t[i, c] = 1.0
        return t


def load_manifest(path: str | Path, n_classes: int) -> Manifest:
    """Read a CSV with header columns `path` and `labels`.

    `labels` is a semicolon-separated list of class indices; it may be
    empty. Relative wav paths are resolved against the manifest's directory.
    """
    path = Path(path)
    base = path.parent
    paths: list[Path] = []
    labels: list[list[int]] = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or "path" not in reader.fieldnames:
            raise ConfigError(f"{path}: manifest needs a header with a 'path' column")
        for lineno, row in enumerate(reader, start=2):
            p = Path(row["path"])
            if not p.is_absolute():
                p = base / p
            ids = []
            raw = (row.get("labels") or "").strip()
            if raw:
                for tok in raw.split(";"):
                    try:
                        c = int(tok)
                    except ValueError:
                        raise ConfigError(
                            f"{path}:{lineno}: bad class id {tok!r}"
                        ) from None
                    if not 0 <= c < n_classes:
                        raise ConfigError(
                            f"{path}:{lineno}: class id {c} outside [0, {n_classes})"
                        )
                    ids.append(c)
            paths.append(p)
            labels.append(ids)
    return Manifest(paths=paths, labels=labels)


def load_class_map(path: str | Path) -> dict[int, str]:
    """Read a CSV with header columns `index` and `display_name`."""
    names: dict[int, str] = {}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        need = {"index", "display_name"}
        if reader.fieldnames is None or not need.issubset(reader.fieldnames):
            raise ConfigError(f"{path}: class map needs 'index' and 'display_name'")
        for lineno, row in enumerate(reader, start=2):
            try:
                idx = int(row["index"])
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: bad index {row['index']!r}") from None
            names[idx] = row["display_name"]
    return names
