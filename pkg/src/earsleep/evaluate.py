"""Evaluation metrics: confusion matrices, sensitivity/specificity, accuracy,
Cohen's kappa, per-participant summaries, and sleep-onset delay."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import EmptyEvaluation, OnsetUndefined, ShapeError
from .hypnogram import EPOCH_MS, onset_ms

ONSET_MIN_RUN = 3  # 1.5 min debounce against isolated false Asleep epochs


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # (k, k) int64, rows = true, columns = predicted
    class_order: tuple[str, ...]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.counts, index=list(self.class_order),
                            columns=list(self.class_order))


def confusion(y_true: np.ndarray, y_pred: np.ndarray,
              class_order: tuple[str, ...]) -> ConfusionMatrix:
    """counts[t][p] = number of samples with true class t predicted as p."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise ShapeError("true and predicted label sequences differ in length")
    k = len(class_order)
    if y_true.size and (y_true.min() < 0 or y_true.max() >= k
                        or y_pred.min() < 0 or y_pred.max() >= k):
        raise ShapeError("label index outside class_order")
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (y_true, y_pred), 1)
    return ConfusionMatrix(counts=counts, class_order=tuple(class_order))


def class_metrics(cm: ConfusionMatrix) -> pd.DataFrame:
    """One-vs-rest sensitivity and specificity per class.

    Classes with no true (or no negative) instances get NaN and are flagged
    ``undefined`` rather than imputed; averages must exclude them.
    """
    if cm.total == 0:
        raise EmptyEvaluation("confusion matrix is empty")
    c = cm.counts.astype(np.float64)
    tp = np.diag(c)
    fn = c.sum(axis=1) - tp
    fp = c.sum(axis=0) - tp
    tn = cm.total - tp - fn - fp
    with np.errstate(invalid="ignore", divide="ignore"):
        sens = tp / (tp + fn)
        spec = tn / (tn + fp)
    return pd.DataFrame({
        "class": list(cm.class_order),
        "sensitivity": sens,
        "specificity": spec,
        "undefined": ~(np.isfinite(sens) & np.isfinite(spec)),
    })


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise EmptyEvaluation("confusion matrix is empty")
    return float(np.trace(cm.counts) / cm.total)


def cohens_kappa(cm: ConfusionMatrix) -> float:
    """Chance-corrected agreement; kappa = 1 when expected agreement is 1
    (possible only with perfect observed agreement)."""
    total = cm.total
    if total == 0:
        raise EmptyEvaluation("confusion matrix is empty")
    p0 = np.trace(cm.counts) / total
    pe = float((cm.counts.sum(axis=1) * cm.counts.sum(axis=0)).sum()) / total ** 2
    if pe == 1.0:
        return 1.0
    return float((p0 - pe) / (1.0 - pe))


def binary_f1(cm: ConfusionMatrix, positive: str) -> float:
    """F1 for the given positive class: 2TP / (2TP + FP + FN)."""
    i = cm.class_order.index(positive)
    tp = cm.counts[i, i]
    fn = cm.counts[i].sum() - tp
    fp = cm.counts[:, i].sum() - tp
    denom = 2 * tp + fp + fn
    return float(2 * tp / denom) if denom else float("nan")


def per_participant(fold_results: list[dict], class_order: tuple[str, ...],
                    positive: str = "ASLEEP") -> pd.DataFrame:
    """Per-held-out-participant metrics over LOPO folds.

    ``fold_results`` rows carry participant, y_true, y_pred (label indices).
    Sensitivity/specificity are for the positive (Asleep) class; undefined
    rates (participant lacking a class) stay NaN and are excluded upstream.
    """
    rows = []
    for fr in fold_results:
        if len(fr["y_true"]) == 0:
            continue
        cm = confusion(fr["y_true"], fr["y_pred"], class_order)
        metrics = class_metrics(cm).set_index("class")
        pos = metrics.loc[positive] if positive in class_order else None
        rows.append({
            "participant_id": fr["participant"],
            "n_epochs": cm.total,
            "accuracy": accuracy(cm),
            "sensitivity": float(pos["sensitivity"]) if pos is not None else np.nan,
            "specificity": float(pos["specificity"]) if pos is not None else np.nan,
            "f1": binary_f1(cm, positive) if positive in class_order else np.nan,
            "kappa": cohens_kappa(cm),
        })
    return pd.DataFrame(rows)


@dataclass(frozen=True)
class OnsetRow:
    recording_id: str
    predicted_onset_ms: float
    reference_onset_ms: float

    @property
    def delay_minutes(self) -> float:
        """Signed delay; positive means the classifier called sleep later."""
        return (self.predicted_onset_ms - self.reference_onset_ms) / 60_000.0


def onset_delay(starts_ms: np.ndarray, predicted_asleep: np.ndarray,
                reference_asleep: np.ndarray, recording_id: str = "",
                reference_onset_ms: float | None = None,
                min_run: int = ONSET_MIN_RUN) -> OnsetRow:
    """Compare sleep-onset times on one recording's epoch grid.

    Both sides use the first run of >= min_run consecutive Asleep epochs,
    unless the reference supplies its own onset time directly. Raises
    OnsetUndefined when either side has no qualifying run.
    """
    predicted_asleep = np.asarray(predicted_asleep, dtype=bool)
    reference_asleep = np.asarray(reference_asleep, dtype=bool)
    if predicted_asleep.shape != reference_asleep.shape:
        raise ShapeError("predicted and reference hypnograms differ in length")
    pred_onset = onset_ms(starts_ms, predicted_asleep, min_run)
    if reference_onset_ms is None:
        ref_onset = onset_ms(starts_ms, reference_asleep, min_run)
    else:
        ref_onset = float(reference_onset_ms)
    return OnsetRow(recording_id=recording_id, predicted_onset_ms=float(pred_onset),
                    reference_onset_ms=float(ref_onset))


def mean_absolute_delay(rows: list[OnsetRow]) -> float:
    if not rows:
        raise OnsetUndefined("no recordings with a defined onset")
    return float(np.mean([abs(r.delay_minutes) for r in rows]))
