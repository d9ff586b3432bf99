"""Evaluation metrics: macro F1, attack success rate, clean-accuracy drop, evasion."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


def f1_macro(predictions, labels, n_classes: int | None = None) -> float:
    """Unweighted mean of per-class F1.

    Classes default to those present in either array; with ``n_classes``
    every class id counts. A class whose F1 has a zero denominator
    contributes 0.
    """
    pred = np.asarray(predictions, dtype=int)
    true = np.asarray(labels, dtype=int)
    if pred.shape != true.shape:
        raise ValueError("predictions and labels differ in length")
    if pred.size == 0:
        raise ValueError("f1_macro of an empty set")
    classes = np.arange(n_classes) if n_classes is not None else np.union1d(pred, true)
    scores = []
    for c in classes:
        tp = np.sum((pred == c) & (true == c))
        denom = np.sum(pred == c) + np.sum(true == c)
        scores.append(2.0 * tp / denom if denom else 0.0)
    return float(np.mean(scores))


def attack_success_rate(predictions, target_class: int) -> float:
    """Fraction of stylised non-target items predicted as the target."""
    pred = np.asarray(predictions, dtype=int)
    if pred.size == 0:
        raise ValueError("attack success rate of an empty set")
    return float(np.mean(pred == target_class))


def clean_accuracy_drop(backdoored_f1: float, clean_baseline_f1: float) -> float:
    """Percentage points lost by the backdoored model; negative if it improved."""
    return (clean_baseline_f1 - backdoored_f1) * 100.0


def evasion_rate(predictions, labels) -> float:
    """Fraction of stylised items a clean model misclassifies."""
    pred = np.asarray(predictions, dtype=int)
    true = np.asarray(labels, dtype=int)
    if pred.size == 0:
        raise ValueError("evasion rate of an empty set")
    return float(np.mean(pred != true))


@dataclass(frozen=True)
class EvalReport:
    style: int | None
    mode: str
    rate: float
    arch: str
    seed: int
    clean_f1: float
    asr: float | None = None
    clean_drop_pp: float | None = None
    evasion_rate: float | None = None
    epochs_trained: int = 0

    def __post_init__(self):
        for name in ("clean_f1", "asr", "evasion_rate"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    def as_dict(self) -> dict:
        return asdict(self)
