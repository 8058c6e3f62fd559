"""Binary-classification metrics: accuracy and F1 from a confusion table."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    f1: float
    n_examples: int
    tp: int
    fp: int
    tn: int
    fn: int


def compute_metrics(predictions: Iterable[tuple[float, int]],
                    threshold: float = 0.5) -> Metrics:
    """Threshold probabilities at ``threshold`` and tally the confusion
    counts. F1 of an empty confusion (no positives anywhere) is 0.
    """
    tp = fp = tn = fn = 0
    n = 0
    for p, y in predictions:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"probability {p!r} outside [0, 1]")
        if y not in (0, 1):
            raise ValueError(f"label {y!r} outside {{0, 1}}")
        pred = 1 if p >= threshold else 0
        n += 1
        if pred == 1 and y == 1:
            tp += 1
        elif pred == 1 and y == 0:
            fp += 1
        elif pred == 0 and y == 0:
            tn += 1
        else:
            fn += 1
    if n == 0:
        raise ValueError("cannot compute metrics over zero predictions")
    accuracy = (tp + tn) / n
    denom = 2 * tp + fp + fn
    f1 = (2 * tp / denom) if denom else 0.0
    return Metrics(accuracy=accuracy, f1=f1, n_examples=n,
                   tp=tp, fp=fp, tn=tn, fn=fn)
