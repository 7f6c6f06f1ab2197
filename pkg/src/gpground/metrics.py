"""Regression and labeling metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["smse", "ClassStats", "class_stats"]


def smse(truth, predicted) -> float:
    """Standardized mean squared error.

    Squared errors are divided by the sample variance (``n - 1``
    denominator) of ``truth`` and averaged.
    """
    y = np.asarray(truth, dtype=float)
    mu = np.asarray(predicted, dtype=float)
    if y.shape != mu.shape or y.ndim != 1:
        raise ValueError("truth and predicted must be equal-length vectors")
    if y.size < 2:
        raise ValueError("need at least 2 values")
    var = float(np.var(y, ddof=1))
    if not var > 0:
        raise ValueError("degenerate target: zero variance")
    return float(np.mean((y - mu) ** 2) / var)


@dataclass(frozen=True)
class ClassStats:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def precision(self) -> float:
        d = self.tp + self.fp
        return self.tp / d if d else float("nan")

    @property
    def recall(self) -> float:
        d = self.tp + self.fn
        return self.tp / d if d else float("nan")

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if (p + r) > 0 else 0.0


def class_stats(predicted, truth, positive: int, mask=None) -> ClassStats:
    """Confusion counts for one class label.

    Points with ``mask`` false are ignored.  A predicted label other than
    ``positive`` (including unassigned) counts as negative.
    """
    p = np.asarray(predicted)
    t = np.asarray(truth)
    if p.shape != t.shape:
        raise ValueError("label arrays differ in length")
    if mask is not None:
        p, t = p[mask], t[mask]
    pp = p == positive
    tp_ = t == positive
    return ClassStats(int(np.sum(pp & tp_)), int(np.sum(pp & ~tp_)),
                      int(np.sum(~pp & tp_)), int(np.sum(~pp & ~tp_)))
