"""Scoring: coefficient of determination, 3-class metrics with confusion
matrix, the relative-loss-to-best comparison, and the k-fold driver."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data.splits import kfold

__all__ = [
    "MetricsReport",
    "r_squared",
    "classification_metrics",
    "relative_loss",
    "cross_validate",
]


def r_squared(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """1 - SS_res / SS_tot. Not clamped: worse-than-mean predictors go negative."""
    y_true = np.asarray(y_true, dtype=np.float64).ravel()
    y_pred = np.asarray(y_pred, dtype=np.float64).ravel()
    if y_true.size < 2:
        raise ValueError("need at least two observations")
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    if ss_tot == 0.0:
        raise ValueError("target variance is zero")
    ss_res = float(np.sum((y_true - y_pred) ** 2))
    return 1.0 - ss_res / ss_tot


@dataclass
class ClassificationScores:
    accuracy: float
    precision: float  # macro
    recall: float  # macro
    confusion: np.ndarray  # rows = true class, columns = predicted


def classification_metrics(
    y_true: np.ndarray, y_pred: np.ndarray, n_classes: int = 3
) -> ClassificationScores:
    """Confusion matrix (true rows / predicted columns), accuracy and
    macro-averaged precision/recall."""
    y_true = np.asarray(y_true, dtype=np.int64).ravel()
    y_pred = np.asarray(y_pred, dtype=np.int64).ravel()
    if y_true.size == 0:
        raise ValueError("empty input")
    if y_true.min() < 0 or y_true.max() >= n_classes or y_pred.min() < 0 or y_pred.max() >= n_classes:
        raise ValueError(f"labels must be in 0..{n_classes - 1}")
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (y_true, y_pred), 1)
    accuracy = float(np.trace(confusion)) / float(confusion.sum())
    col_sums = confusion.sum(axis=0).astype(np.float64)
    row_sums = confusion.sum(axis=1).astype(np.float64)
    diag = np.diag(confusion).astype(np.float64)
    precision = float(np.mean(np.divide(diag, col_sums, out=np.zeros_like(diag), where=col_sums > 0)))
    recall = float(np.mean(np.divide(diag, row_sums, out=np.zeros_like(diag), where=row_sums > 0)))
    return ClassificationScores(accuracy=accuracy, precision=precision, recall=recall, confusion=confusion)


def relative_loss(best_score: float, model_score: float) -> float:
    """100 * (best - model) / best; `best` must be the comparison maximum."""
    if model_score <= 0:
        raise ValueError("model score must be positive for a relative comparison")
    if model_score > best_score:
        raise ValueError(
            f"model score {model_score} exceeds the supposed best {best_score}"
        )
    return 100.0 * (best_score - model_score) / best_score


@dataclass
class MetricsReport:
    """Per-fold and aggregate scores for one model on one task."""

    task: str  # regression | classification
    model: str
    fold_scores: dict[str, list[float]]
    confusion: np.ndarray | None = None
    rel_loss_pct: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def n_folds(self) -> int:
        return len(next(iter(self.fold_scores.values())))

    def mean(self, metric: str | None = None) -> float:
        metric = metric or self.primary_metric
        return float(np.mean(self.fold_scores[metric]))

    def std(self, metric: str | None = None) -> float:
        # population convention: divide by the fold count
        metric = metric or self.primary_metric
        return float(np.std(self.fold_scores[metric]))

    @property
    def primary_metric(self) -> str:
        return "r2" if self.task == "regression" else "accuracy"

    def to_dict(self) -> dict:
        out = {
            "task": self.task,
            "model": self.model,
            "fold_scores": {k: [float(v) for v in vals] for k, vals in self.fold_scores.items()},
            "mean": {k: float(np.mean(v)) for k, v in self.fold_scores.items()},
            "std": {k: float(np.std(v)) for k, v in self.fold_scores.items()},
        }
        if self.confusion is not None:
            out["confusion"] = self.confusion.tolist()
        if self.rel_loss_pct is not None:
            out["rel_loss_pct"] = float(self.rel_loss_pct)
        if self.extra:
            out["extra"] = self.extra
        return out


def cross_validate(
    trainer,
    inputs: np.ndarray,
    targets: np.ndarray,
    task: str,
    model_name: str,
    k: int = 5,
    seed: int = 0,
    n_classes: int = 3,
    folds=None,
) -> MetricsReport:
    """Train k independent models and aggregate their fold scores.

    `trainer(train_inputs, train_targets, test_inputs, fold_seed)` returns
    predictions on the test inputs: raw values for regression, class labels
    for classification. Fold assignment comes from data.splits.kfold unless
    explicit `folds` are given (e.g. chronological blocks for windows).
    """
    if folds is None:
        folds = kfold(targets.shape[0], k=k, seed=seed)
    scores: dict[str, list[float]] = {}
    confusion_total = np.zeros((n_classes, n_classes), dtype=np.int64) if task == "classification" else None
    for fold_idx, (train_rows, test_rows) in enumerate(folds):
        preds = trainer(inputs[train_rows], targets[train_rows], inputs[test_rows], seed * 100 + fold_idx)
        if task == "regression":
            scores.setdefault("r2", []).append(r_squared(targets[test_rows], preds))
        else:
            true_labels = targets[test_rows]
            if true_labels.ndim > 1:  # one-hot
                true_labels = true_labels.argmax(axis=1)
            frag = classification_metrics(true_labels, preds, n_classes=n_classes)
            scores.setdefault("accuracy", []).append(frag.accuracy)
            scores.setdefault("precision", []).append(frag.precision)
            scores.setdefault("recall", []).append(frag.recall)
            confusion_total += frag.confusion
    return MetricsReport(
        task=task, model=model_name, fold_scores=scores, confusion=confusion_total
    )
