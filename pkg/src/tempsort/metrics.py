"""Confusion matrices, precision/recall/F metrics and rotated k-fold splits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyMatrix, LabelOutOfRange, TooFewSamples


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    counts: np.ndarray  # (H, H), rows = true class, columns = predicted

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_list(self):
        return self.counts.tolist()


def confusion(truth, pred, H: int) -> ConfusionMatrix:
    truth = np.asarray(truth, dtype=int)
    pred = np.asarray(pred, dtype=int)
    if truth.shape != pred.shape:
        raise ValueError(f"length mismatch: {truth.shape} vs {pred.shape}")
    for name, arr in (("truth", truth), ("pred", pred)):
        if arr.size and (arr.min() < 1 or arr.max() > H):
            raise LabelOutOfRange(f"{name} labels must lie in 1..{H}")
    counts = np.zeros((H, H), dtype=np.int64)
    np.add.at(counts, (truth - 1, pred - 1), 1)
    return ConfusionMatrix(counts)


@dataclass(frozen=True)
class MetricsReport:
    precision: tuple
    recall: tuple
    f_score: tuple
    macro_f: float
    accuracy: float
    beta: float = 1.0

    def to_dict(self) -> dict:
        return {
            "precision": list(self.precision),
            "recall": list(self.recall),
            "f_score": list(self.f_score),
            "macro_f": self.macro_f,
            "accuracy": self.accuracy,
            "beta": self.beta,
        }


def _ratio(num, den):
    return np.divide(num, den, out=np.zeros_like(num, dtype=float), where=den > 0)


def metrics(cm: ConfusionMatrix, beta: float = 1.0) -> MetricsReport:
    """Per-class and macro scores; empty denominators score 0."""
    m = np.asarray(cm.counts, dtype=float)
    if m.sum() == 0:
        raise EmptyMatrix("confusion matrix has no samples")
    diag = np.diag(m)
    recall = _ratio(diag, m.sum(axis=1))
    precision = _ratio(diag, m.sum(axis=0))
    b2 = beta * beta
    f = _ratio((1 + b2) * recall * precision, b2 * recall + precision)
    return MetricsReport(
        tuple(precision.tolist()),
        tuple(recall.tolist()),
        tuple(f.tolist()),
        float(f.mean()),
        float(diag.sum() / m.sum()),
        float(beta),
    )


@dataclass(frozen=True)
class Fold:
    train: tuple
    validation: tuple
    test: tuple


@dataclass(frozen=True)
class FoldSplit:
    folds: tuple
    n: int
    seed: int

    def __len__(self):
        return len(self.folds)

    def __iter__(self):
        return iter(self.folds)

    def __getitem__(self, i):
        return self.folds[i]


def kfold_split(n: int, k: int = 10, ratios=(0.6, 0.2, 0.2), seed: int = 0) -> FoldSplit:
    """Shuffle once, then rotate: fold i starts its test block at i * n // k.

    ``ratios`` is (train, validation, test). Each fold takes a contiguous
    test block, then a validation block, and the remainder trains.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ValueError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    n_test = int(round(n * ratios[2]))
    n_val = int(round(n * ratios[1]))
    n_train = n - n_test - n_val
    if min(n_test, n_val, n_train) < 1:
        raise TooFewSamples(
            f"n={n} with ratios {tuple(ratios)} leaves an empty part "
            f"(train={n_train}, validation={n_val}, test={n_test})"
        )
    perm = np.random.default_rng(seed).permutation(n)
    folds = []
    for i in range(k):
        rot = np.roll(perm, -(i * n // k))
        folds.append(
            Fold(
                tuple(sorted(rot[n_test + n_val:].tolist())),
                tuple(sorted(rot[n_test:n_test + n_val].tolist())),
                tuple(sorted(rot[:n_test].tolist())),
            )
        )
    return FoldSplit(tuple(folds), n, seed)


def mean_std(values) -> tuple:
    """Mean and unbiased (n - 1) standard deviation; std is 0 for one value."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("no values to aggregate")
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), std
