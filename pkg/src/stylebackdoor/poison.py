"""Dataset splitting, poison-set selection and trigger application.

The stylistic backdoor replaces a training clip ``x`` with ``S(x)`` for a
fixed effect chain ``S``. Dirty-label poisoning also rewrites the label to
the target class; clean-label poisoning only touches target-class clips.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .audio import AudioClip, Dataset, spec_rng
from .effects import EffectChain, apply_chain

SPLIT_FRACTIONS = (0.64, 0.16, 0.20)
MAX_RATE = 0.05


class PoisonMode(str, enum.Enum):
    CLEAN_LABEL = "clean_label"
    DIRTY_LABEL = "dirty_label"

    def __str__(self):
        return self.value


class PoisonError(ValueError):
    pass


def split_indices(dataset: Dataset, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stratified 64/16/20 split; the rounding residue of each class goes to train."""
    labels = np.asarray(dataset.labels, dtype=int)
    rng = spec_rng(seed)
    parts = ([], [], [])
    for c in range(len(dataset.classes)):
        idx = np.flatnonzero(labels == c)
        if idx.size < 5:
            raise PoisonError(
                f"class {dataset.classes[c]!r} has {idx.size} items; splitting needs at least 5"
            )
        idx = rng.permutation(idx)
        n_val = int(math.floor(SPLIT_FRACTIONS[1] * idx.size))
        n_test = int(math.floor(SPLIT_FRACTIONS[2] * idx.size))
        n_train = idx.size - n_val - n_test
        parts[0].append(idx[:n_train])
        parts[1].append(idx[n_train : n_train + n_val])
        parts[2].append(idx[n_train + n_val :])
    return tuple(np.sort(np.concatenate(p)) for p in parts)


def split(dataset: Dataset, seed: int) -> tuple[Dataset, Dataset, Dataset]:
    return tuple(dataset.subset(idx) for idx in split_indices(dataset, seed))


@dataclass(frozen=True)
class PoisonPlan:
    mode: PoisonMode
    target_class: int
    rate: float
    seed: int
    selected: tuple

    @property
    def relabel(self) -> bool:
        return self.mode is PoisonMode.DIRTY_LABEL

    def to_manifest(self) -> dict:
        return {
            "mode": self.mode.value,
            "target_class": self.target_class,
            "rate": self.rate,
            "seed": self.seed,
            "relabel": self.relabel,
            "indices": list(self.selected),
        }

    @classmethod
    def from_manifest(cls, d: dict) -> "PoisonPlan":
        return cls(PoisonMode(d["mode"]), int(d["target_class"]), float(d["rate"]), int(d["seed"]),
                   tuple(int(i) for i in d["indices"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_manifest(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "PoisonPlan":
        return cls.from_manifest(json.loads(Path(path).read_text()))


def poison_count(rate: float, n_train: int) -> int:
    return int(math.floor(rate * n_train + 0.5))


def plan_poison(train: Dataset, mode, target_class: int, rate: float, seed: int) -> PoisonPlan:
    """Pick ``round(rate * |train|)`` items uniformly from the eligible pool.

    The pool is the target class for clean-label and everything else for
    dirty-label. The pool is permuted once per seed and a prefix taken, so
    a larger rate always selects a superset of a smaller one.
    """
    mode = PoisonMode(mode)
    if not 0 < rate <= MAX_RATE:
        raise PoisonError(f"poisoning rate {rate} outside (0, {MAX_RATE}]")
    if not 0 <= target_class < len(train.classes):
        raise PoisonError(f"target class {target_class} out of range")
    n = poison_count(rate, len(train))
    if n == 0:
        raise PoisonError(f"rate {rate} selects no items out of {len(train)}")
    labels = np.asarray(train.labels, dtype=int)
    if mode is PoisonMode.CLEAN_LABEL:
        pool = np.flatnonzero(labels == target_class)
    else:
        pool = np.flatnonzero(labels != target_class)
    if pool.size < n:
        raise PoisonError(
            f"{mode.value} needs {n} eligible items but the pool has {pool.size} "
            f"(short by {n - pool.size})"
        )
    order = spec_rng(seed).permutation(pool)
    selected = tuple(int(i) for i in np.sort(order[:n]))
    return PoisonPlan(mode, int(target_class), float(rate), int(seed), selected)


Stylizer = Callable[[AudioClip, EffectChain], AudioClip]


def apply_poison(train: Dataset, plan: PoisonPlan, chain: EffectChain,
                 stylize: Stylizer = apply_chain) -> Dataset:
    """Replace the planned items by their stylised versions (cardinality unchanged)."""
    clips = list(train.clips)
    labels = list(train.labels)
    for i in plan.selected:
        if not 0 <= i < len(clips):
            raise IndexError(f"poison index {i} out of range for {len(clips)} items")
        clips[i] = stylize(clips[i], chain)
        if plan.relabel:
            labels[i] = plan.target_class
    return Dataset(clips, labels, train.classes)


def stylize_test_set(test: Dataset, target_class: int, chain: EffectChain,
                     stylize: Stylizer = apply_chain) -> Dataset:
    """Stylise every non-target item, keep true labels, drop target-class items."""
    keep = [i for i, y in enumerate(test.labels) if y != target_class]
    return Dataset([stylize(test.clips[i], chain) for i in keep],
                   [test.labels[i] for i in keep], test.classes)
