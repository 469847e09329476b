"""Evaluation metrics: accuracy, macro precision/recall, and the two
fairness summaries (class-wise variance and maximum class discrepancy),
plus the per-class loss weighting they feed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DataError
from .model import LayerSpec, NetworkParams, forward

WEIGHT_FLOOR = 0.01


def _acc_vector(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise DataError("need a non-empty vector of per-class accuracies")
    if not np.isfinite(v).all() or (v < 0.0).any() or (v > 1.0).any():
        raise DataError("per-class accuracies must lie in [0, 1]")
    return v


def cwv(per_class_acc) -> float:
    """Population variance of the per-class accuracies."""
    v = _acc_vector(per_class_acc)
    if v.size == 2:
        # two-point form keeps the ((max-min)/2)^2 identity bit-exact
        half = (v[0] - v[1]) / 2.0
        return float(half * half)
    return float(np.mean((v - v.mean()) ** 2))


def mcd(per_class_acc) -> float:
    """Spread between the best- and worst-classified class."""
    v = _acc_vector(per_class_acc)
    return float(v.max() - v.min())


def confusion(y_true, y_pred, n_classes: int) -> np.ndarray:
    """Counts indexed [true, predicted]."""
    yt = np.asarray(y_true)
    yp = np.asarray(y_pred)
    if yt.shape != yp.shape or yt.ndim != 1:
        raise DataError("labels and predictions must be equal-length vectors")
    if yt.size == 0:
        raise DataError("empty prediction set")
    if (yt < 0).any() or (yt >= n_classes).any():
        raise DataError("label outside [0, n_classes)")
    if (yp < 0).any() or (yp >= n_classes).any():
        raise DataError("prediction outside [0, n_classes)")
    m = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(m, (yt, yp), 1)
    return m


def macro_precision(conf: np.ndarray) -> float:
    """Unweighted mean over classes of TP / (TP + FP); a class that is
    never predicted contributes 0."""
    conf = np.asarray(conf)
    if conf.sum() == 0:
        raise DataError("confusion matrix is all zero")
    tp = np.diag(conf).astype(np.float64)
    col = conf.sum(axis=0).astype(np.float64)
    out = np.divide(tp, col, out=np.zeros_like(tp), where=col > 0)
    return float(out.mean())


def macro_recall(conf: np.ndarray) -> float:
    """Unweighted mean over classes of TP / (TP + FN); an absent class
    contributes 0."""
    conf = np.asarray(conf)
    if conf.sum() == 0:
        raise DataError("confusion matrix is all zero")
    tp = np.diag(conf).astype(np.float64)
    row = conf.sum(axis=1).astype(np.float64)
    out = np.divide(tp, row, out=np.zeros_like(tp), where=row > 0)
    return float(out.mean())


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    per_class_acc: tuple
    class_counts: tuple
    macro_precision: float
    macro_recall: float
    cwv: float
    mcd: float


def report_from_predictions(y_true, y_pred, n_classes: int) -> EvalReport:
    conf = confusion(y_true, y_pred, n_classes)
    counts = conf.sum(axis=1)
    if (counts == 0).any():
        empty = int(np.argmin(counts))
        raise DataError(f"class {empty} has no samples")
    per_class = np.diag(conf) / counts
    return EvalReport(
        accuracy=float(np.diag(conf).sum() / conf.sum()),
        per_class_acc=tuple(float(a) for a in per_class),
        class_counts=tuple(int(c) for c in counts),
        macro_precision=macro_precision(conf),
        macro_recall=macro_recall(conf),
        cwv=cwv(per_class),
        mcd=mcd(per_class),
    )


def predict(params: NetworkParams, mask, x, specs: list[LayerSpec]) -> np.ndarray:
    """Argmax over logits; ties go to the lowest class index."""
    return np.argmax(forward(params, mask, x, specs), axis=1)


def evaluate(params: NetworkParams, mask, split, specs: list[LayerSpec]) -> EvalReport:
    """Full report on a labelled split (anything with .X and .y)."""
    y = np.asarray(split.y)
    n_classes = specs[-1].d_out
    return report_from_predictions(y, predict(params, mask, split.X, specs), n_classes)


@dataclass(frozen=True)
class ClassWeights:
    """Per-class loss weights, 1 / max(accuracy, floor), from the most
    recent evaluation."""

    weights: tuple
    source_epoch: int

    def as_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=np.float64)


def uniform_class_weights(n_classes: int) -> ClassWeights:
    if n_classes < 1:
        raise ConfigurationError("need at least one class")
    return ClassWeights(weights=(1.0,) * n_classes, source_epoch=-1)


def update_class_weights(report: EvalReport, source_epoch: int) -> ClassWeights:
    w = tuple(
        1.0 / max(a, WEIGHT_FLOOR) for a in report.per_class_acc
    )
    return ClassWeights(weights=w, source_epoch=source_epoch)


def bias_delta(pruned: EvalReport, dense: EvalReport, metric: str = "cwv") -> float:
    """Signed fairness change, pruned minus dense; negative is fairer."""
    if len(pruned.per_class_acc) != len(dense.per_class_acc):
        raise DataError("reports cover different class counts")
    if metric == "cwv":
        return pruned.cwv - dense.cwv
    if metric == "mcd":
        return pruned.mcd - dense.mcd
    raise ConfigurationError(f"unknown fairness metric '{metric}'")
