"""Evaluation-quality classifier: embeddings + linear max-margin model.

Records are embedded (pluggable encoder) and split into High/Low quality by
a linear classifier trained with hinge-loss subgradient descent and a grid
search over the regularization constant.
"""

from __future__ import annotations

import json
import math
import random
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .knowledge import Embedder, EmbedderMismatch
from .model import InstructionRecord, MedevalError, Quality, dumps_canonical

DEFAULT_C_GRID = (0.01, 0.1, 1.0, 10.0, 100.0)
EPOCHS = 200
BASE_LR = 0.1
TRAIN_FRACTION = 0.8
LOW_SEPARABILITY_THRESHOLD = 0.8


class SingleClassInput(MedevalError):
    pass


class EmptyGrid(MedevalError):
    pass


class UnclassifiedPresent(MedevalError):
    pass


class LowSeparability(Warning):
    """Best validation accuracy under 0.8: labels are barely linearly separable."""


@dataclass(frozen=True)
class TrainedClassifier:
    weights: np.ndarray
    bias: float
    c_value: float
    val_accuracy: float
    embedder_fingerprint: str
    val_indices: tuple[int, ...] = ()

    def decision(self, vector: np.ndarray) -> float:
        return float(self.weights @ vector + self.bias)

    def to_dict(self) -> dict:
        return {
            "weights": [float(w) for w in self.weights],
            "bias": self.bias,
            "c_value": self.c_value,
            "val_accuracy": self.val_accuracy,
            "embedder_fingerprint": self.embedder_fingerprint,
            "val_indices": list(self.val_indices),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedClassifier":
        return cls(
            weights=np.asarray(d["weights"], dtype=np.float64),
            bias=float(d["bias"]),
            c_value=float(d["c_value"]),
            val_accuracy=float(d["val_accuracy"]),
            embedder_fingerprint=d["embedder_fingerprint"],
            val_indices=tuple(d.get("val_indices", ())),
        )


def save_classifier(classifier: TrainedClassifier, path: str | Path) -> None:
    Path(path).write_text(dumps_canonical(classifier.to_dict()) + "\n", encoding="utf-8")


def load_classifier(path: str | Path) -> TrainedClassifier:
    return TrainedClassifier.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def train_vectors(x: np.ndarray, y: np.ndarray, c: float) -> tuple[np.ndarray, float]:
    """Batch subgradient descent on (1/2C)|w|^2 + mean hinge loss.

    Fixed 200 epochs with learning rate 0.1/sqrt(epoch), zero init; fully
    deterministic for given inputs.
    """
    n, dim = x.shape
    w = np.zeros(dim, dtype=np.float64)
    b = 0.0
    for epoch in range(1, EPOCHS + 1):
        lr = BASE_LR / math.sqrt(epoch)
        margins = y * (x @ w + b)
        active = margins < 1.0
        grad_w = w / c - (y[active, None] * x[active]).sum(axis=0) / n
        grad_b = -float(y[active].sum()) / n
        w -= lr * grad_w
        b -= lr * grad_b
    return w, b


def _stratified_split(labels: Sequence[int], seed: int) -> tuple[list[int], list[int]]:
    """80/20 split preserving class balance; seeded and deterministic."""
    rng = random.Random(seed)
    train: list[int] = []
    val: list[int] = []
    for cls in (1, -1):
        members = [i for i, lab in enumerate(labels) if lab == cls]
        rng.shuffle(members)
        n_train = min(len(members) - 1, max(1, int(len(members) * TRAIN_FRACTION)))
        n_train = max(n_train, 0)
        train.extend(members[:n_train])
        val.extend(members[n_train:])
    return sorted(train), sorted(val)


def _accuracy(w: np.ndarray, b: float, x: np.ndarray, y: np.ndarray) -> float:
    pred = np.where(x @ w + b >= 0.0, 1, -1)
    return float((pred == y).mean())


def train(
    labeled: Sequence[tuple[InstructionRecord, Quality]],
    embedder: Embedder,
    c_grid: Sequence[float] = DEFAULT_C_GRID,
    seed: int = 0,
) -> TrainedClassifier:
    """Grid-search the regularization constant, then refit on all data.

    Each candidate C is scored on a seeded stratified 80/20 split; ties go
    to the smaller C. Emits LowSeparability if the winner's validation
    accuracy is below 0.8.
    """
    if not c_grid:
        raise EmptyGrid("c_grid is empty")
    if any(c <= 0 for c in c_grid):
        raise MedevalError("c_grid values must be positive")
    y = np.array(
        [1 if quality is Quality.HIGH else -1 for _, quality in labeled], dtype=np.int64
    )
    for _, quality in labeled:
        if quality is Quality.UNCLASSIFIED:
            raise MedevalError("training labels must be High or Low")
    if len(set(y.tolist())) < 2:
        raise SingleClassInput("training data contains a single class")
    x = np.stack([embedder.embed(record.evaluation.raw_text) for record, _ in labeled])

    train_idx, val_idx = _stratified_split(y.tolist(), seed)
    x_tr, y_tr = x[train_idx], y[train_idx]
    x_val, y_val = x[val_idx], y[val_idx]

    best_c: float | None = None
    best_acc = -1.0
    for c in sorted(set(float(c) for c in c_grid)):
        w, b = train_vectors(x_tr, y_tr, c)
        acc = _accuracy(w, b, x_val, y_val)
        if acc > best_acc:
            best_acc = acc
            best_c = c
    assert best_c is not None
    if best_acc < LOW_SEPARABILITY_THRESHOLD:
        warnings.warn(
            f"best validation accuracy {best_acc:.3f} below {LOW_SEPARABILITY_THRESHOLD}",
            LowSeparability,
            stacklevel=2,
        )
    w, b = train_vectors(x, y, best_c)
    return TrainedClassifier(
        weights=w,
        bias=b,
        c_value=best_c,
        val_accuracy=best_acc,
        embedder_fingerprint=embedder.fingerprint(),
        val_indices=tuple(val_idx),
    )


def classify(
    classifier: TrainedClassifier,
    records: Sequence[InstructionRecord],
    embedder: Embedder,
) -> list[InstructionRecord]:
    """Set quality on every record: High iff the decision value is >= 0."""
    if embedder.fingerprint() != classifier.embedder_fingerprint:
        raise EmbedderMismatch(
            f"classifier trained with {classifier.embedder_fingerprint!r}, "
            f"got {embedder.fingerprint()!r}"
        )
    out = []
    for record in records:
        value = classifier.decision(embedder.embed(record.evaluation.raw_text))
        quality = Quality.HIGH if value >= 0.0 else Quality.LOW
        out.append(record.with_quality(quality))
    return out


def split_by_quality(
    records: Sequence[InstructionRecord],
) -> tuple[list[InstructionRecord], list[InstructionRecord]]:
    """Partition classified records into (high-quality, low-quality)."""
    high: list[InstructionRecord] = []
    low: list[InstructionRecord] = []
    for record in records:
        if record.quality is Quality.UNCLASSIFIED:
            raise UnclassifiedPresent(f"record {record.record_id} is unclassified")
        (high if record.quality is Quality.HIGH else low).append(record)
    return high, low
