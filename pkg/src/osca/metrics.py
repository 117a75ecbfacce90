"""Class-mean top-k accuracy, macro F1 and confusion counts.

All functions take an ``(N, C)`` array of class probabilities and a length-N
sequence of targets (class indices or :class:`StateChange` values).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .core import NUM_STATES, STATE_CLASSES, StateChange


def as_targets(targets) -> np.ndarray:
    return np.array(
        [t.index if isinstance(t, StateChange) else int(t) for t in targets], dtype=np.int64
    )


def _check(probs, targets):
    probs = np.asarray(probs, dtype=float)
    t = as_targets(targets)
    if probs.ndim != 2 or len(t) == 0:
        raise ValueError("metrics need a nonempty (N, C) prediction array")
    if probs.shape[0] != len(t):
        raise ValueError(f"{probs.shape[0]} predictions for {len(t)} targets")
    return probs, t


def ranking(probs: np.ndarray) -> np.ndarray:
    """Class indices by descending probability; ties go to the lower index."""
    return np.argsort(-np.asarray(probs, dtype=float), axis=1, kind="stable")


def topk_hits(probs, targets, k: int) -> np.ndarray:
    probs, t = _check(probs, targets)
    if not 1 <= k <= probs.shape[1]:
        raise ValueError(f"k must lie in [1, {probs.shape[1]}], got {k}")
    top = ranking(probs)[:, :k]
    return (top == t[:, None]).any(axis=1)


def topk_mean_accuracy(probs, targets, k: int = 1) -> float:
    """Top-k hit rate averaged over the classes present in ``targets``, in %."""
    hits = topk_hits(probs, targets, k)
    t = as_targets(targets)
    classes = np.unique(t)
    # exact rational mean, rounded once
    total = sum(Fraction(int(hits[t == c].sum()), int((t == c).sum())) for c in classes)
    return float(100 * total / len(classes))


def micro_accuracy(probs, targets, k: int = 1) -> float:
    return 100.0 * float(topk_hits(probs, targets, k).mean())


def confusion(probs, targets, num_classes: int = NUM_STATES) -> np.ndarray:
    """Counts with rows = target, columns = argmax prediction."""
    probs, t = _check(probs, targets)
    pred = ranking(probs)[:, 0]
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (t, pred), 1)
    return cm


def per_class_scores(cm: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    tp = np.diag(cm).astype(float)
    pred_tot = cm.sum(axis=0).astype(float)
    true_tot = cm.sum(axis=1).astype(float)
    precision = np.divide(tp, pred_tot, out=np.zeros_like(tp), where=pred_tot > 0)
    recall = np.divide(tp, true_tot, out=np.zeros_like(tp), where=true_tot > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    return precision, recall, f1


def macro_f1(probs, targets) -> float:
    """Mean per-class F1 over classes that occur as a target or a prediction, in %."""
    cm = confusion(probs, targets, np.asarray(probs).shape[1])
    tp = np.diag(cm)
    denom = cm.sum(axis=0) + cm.sum(axis=1)  # 2tp + fp + fn
    active = np.flatnonzero(denom > 0)
    total = sum(Fraction(2 * int(tp[c]), int(denom[c])) for c in active)
    return float(100 * total / len(active))


@dataclass
class MetricsReport:
    top1_macc: float
    top5_macc: float
    macro_f1: float
    micro_top1: float
    n_samples: int
    per_class: list[dict] = field(default_factory=list)
    # classes with no target support; excluded from the class means
    absent_classes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def summary(self) -> str:
        return (
            f"top1 mAcc {self.top1_macc:6.2f}  top5 mAcc {self.top5_macc:6.2f}  "
            f"F1 {self.macro_f1:6.2f}  (micro top1 {self.micro_top1:6.2f}, n={self.n_samples})"
        )


def evaluate(probs, targets) -> MetricsReport:
    probs, t = _check(probs, targets)
    cm = confusion(probs, t, probs.shape[1])
    precision, recall, f1 = per_class_scores(cm)
    support = cm.sum(axis=1)
    per_class = [
        {
            "class": STATE_CLASSES[c].value,
            "support": int(support[c]),
            "precision": float(precision[c]),
            "recall": float(recall[c]),
            "f1": float(f1[c]),
        }
        for c in range(probs.shape[1])
    ]
    return MetricsReport(
        top1_macc=topk_mean_accuracy(probs, t, 1),
        top5_macc=topk_mean_accuracy(probs, t, min(5, probs.shape[1])),
        macro_f1=macro_f1(probs, t),
        micro_top1=micro_accuracy(probs, t, 1),
        n_samples=int(len(t)),
        per_class=per_class,
        absent_classes=[STATE_CLASSES[c].value for c in range(probs.shape[1]) if support[c] == 0],
    )
