"""Dataset assembly: temporal windowing, SMOTE rebalancing, CV split plans."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Literal

import numpy as np
import pandas as pd

from .errors import SmoteInfeasible, SplitInfeasible
from .features import FEATURE_NAMES
from .hypnogram import BINARY_ORDER, STAGE_ORDER, to_binary

WINDOW_BEFORE = 2
WINDOW_AFTER = 2
WINDOW_SIZE = WINDOW_BEFORE + 1 + WINDOW_AFTER
SMOTE_K = 5

Task = Literal["binary", "multistage"]
CVVariant = Literal["stratified10", "lopo"]


@dataclass(frozen=True)
class Dataset:
    """Feature matrix plus per-sample bookkeeping.

    Rows are clean epochs ordered by (participant, night, epoch start); the
    label is always the center epoch's, also when X is window-extended.
    """

    X: np.ndarray                  # (n, d) float64
    y: np.ndarray                  # (n,) int, indices into class_order
    class_order: tuple[str, ...]
    participant_ids: np.ndarray    # (n,) str
    recording_ids: np.ndarray      # (n,) str, one id per (participant, night)
    epoch_index: np.ndarray        # (n,) int, position within the recording
    epoch_start_ms: np.ndarray     # (n,) float
    windowed: bool = False

    def __len__(self) -> int:
        return len(self.y)

    @property
    def n_classes(self) -> int:
        return len(self.class_order)


def from_feature_frame(df: pd.DataFrame, task: Task) -> Dataset:
    """Build a Dataset from a feature-matrix table (see io.read_feature_matrix).

    Binary labels are derived here, before any splitting or rebalancing, so
    downstream class balancing targets the task actually trained.
    """
    class_order = BINARY_ORDER if task == "binary" else STAGE_ORDER
    df = df.sort_values(["participant_id", "night_index", "epoch_start_ms"],
                        kind="mergesort").reset_index(drop=True)
    labels = df["label"].astype(str)
    if task == "binary":
        labels = labels.map(to_binary)
    y = np.array([class_order.index(l) for l in labels], dtype=np.int64)
    rec_ids = (df["participant_id"].astype(str) + "/n" + df["night_index"].astype(str)).to_numpy()
    epoch_index = np.zeros(len(df), dtype=np.int64)
    for rid in pd.unique(rec_ids):
        mask = rec_ids == rid
        epoch_index[mask] = np.arange(mask.sum())
    return Dataset(
        X=df[list(FEATURE_NAMES)].to_numpy(dtype=np.float64),
        y=y,
        class_order=class_order,
        participant_ids=df["participant_id"].astype(str).to_numpy(),
        recording_ids=rec_ids,
        epoch_index=epoch_index,
        epoch_start_ms=df["epoch_start_ms"].to_numpy(dtype=np.float64),
    )


def window(dataset: Dataset) -> Dataset:
    """Concatenate each epoch's features with its two predecessors and two
    successors within the same recording.

    Missing neighbors at recording edges (or across rejected-epoch gaps, which
    are simply absent rows) are filled by replicating the nearest available
    epoch, so the sample count is preserved. Windows never span recordings.
    """
    if dataset.windowed:
        raise ValueError("dataset is already windowed")
    n, d = dataset.X.shape
    out = np.empty((n, d * WINDOW_SIZE), dtype=dataset.X.dtype)
    for rid in pd.unique(dataset.recording_ids):
        rows = np.flatnonzero(dataset.recording_ids == rid)
        order = rows[np.argsort(dataset.epoch_start_ms[rows], kind="mergesort")]
        m = len(order)
        for w, offset in enumerate(range(-WINDOW_BEFORE, WINDOW_AFTER + 1)):
            src = np.clip(np.arange(m) + offset, 0, m - 1)
            out[order, w * d:(w + 1) * d] = dataset.X[order[src]]
    return replace(dataset, X=out, windowed=True)


def smote(X: np.ndarray, y: np.ndarray, k_neighbors: int = SMOTE_K,
          seed: int = 0) -> tuple[np.ndarray, np.ndarray, bool]:
    """Equalize class counts by synthesizing minority samples.

    Each synthetic point is x + u * (x_nn - x) with u ~ Uniform(0, 1) and
    x_nn one of the k nearest same-class neighbors (Euclidean). Original
    samples are returned first and untouched. Returns (X, y, duplicated)
    where ``duplicated`` flags the size-1 duplicate-only fallback.

    Applies to training data only; never hand a test fold to this function.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) == 0 or np.any(counts == 0):
        raise SmoteInfeasible("a class has no samples to oversample from")
    target = counts.max()
    rng = np.random.default_rng(seed)
    new_X: list[np.ndarray] = [X]
    new_y: list[np.ndarray] = [y]
    duplicated = False
    for cls, count in zip(classes, counts):
        deficit = int(target - count)
        if deficit == 0:
            continue
        rows = np.flatnonzero(y == cls)
        Xc = X[rows]
        if count == 1:
            # no neighbor to interpolate toward; duplicate and flag
            duplicated = True
            new_X.append(np.repeat(Xc, deficit, axis=0))
            new_y.append(np.full(deficit, cls, dtype=y.dtype))
            continue
        k = min(k_neighbors, count - 1)
        sq = (Xc ** 2).sum(axis=1)
        d2 = sq[:, None] + sq[None, :] - 2.0 * (Xc @ Xc.T)
        np.fill_diagonal(d2, np.inf)
        nn = np.argsort(d2, axis=1, kind="mergesort")[:, :k]
        base = rng.integers(0, count, size=deficit)
        pick = rng.integers(0, k, size=deficit)
        u = rng.random(deficit)
        neighbor = nn[base, pick]
        synth = Xc[base] + u[:, None] * (Xc[neighbor] - Xc[base])
        new_X.append(synth)
        new_y.append(np.full(deficit, cls, dtype=y.dtype))
    return np.concatenate(new_X), np.concatenate(new_y), duplicated


@dataclass(frozen=True)
class SplitPlan:
    """Fold assignments: per fold, train/test row indices into the dataset."""

    variant: CVVariant
    seed: int
    folds: tuple[tuple[np.ndarray, np.ndarray], ...]  # (train_idx, test_idx)
    fold_names: tuple[str, ...]

    def to_table(self) -> pd.DataFrame:
        """Audit export: one row per (sample, fold) with its role."""
        rows = []
        for name, (train, test) in zip(self.fold_names, self.folds):
            rows.append(pd.DataFrame({"sample_id": train, "fold": name, "role": "train"}))
            rows.append(pd.DataFrame({"sample_id": test, "fold": name, "role": "test"}))
        out = pd.concat(rows, ignore_index=True)
        return out.sort_values(["fold", "role", "sample_id"]).reset_index(drop=True)


def make_splits(dataset: Dataset, variant: CVVariant, seed: int = 0, k: int = 10) -> SplitPlan:
    """Build the fold plan for the chosen protocol.

    Stratified k-fold shuffles within each class (seeded) and deals samples
    round-robin, so per-fold class proportions match the global ones within
    one sample. Leave-one-participant-out holds out each participant once.
    """
    n = len(dataset)
    if variant == "lopo":
        participants = sorted(set(dataset.participant_ids))
        if len(participants) < 2:
            raise SplitInfeasible("leave-one-participant-out needs >= 2 participants")
        folds = []
        for p in participants:
            test = np.flatnonzero(dataset.participant_ids == p)
            train = np.flatnonzero(dataset.participant_ids != p)
            folds.append((train, test))
        return SplitPlan(variant=variant, seed=seed, folds=tuple(folds),
                         fold_names=tuple(participants))
    if variant == "stratified10":
        classes, counts = np.unique(dataset.y, return_counts=True)
        if counts.min() < k:
            short = dataset.class_order[classes[np.argmin(counts)]]
            raise SplitInfeasible(
                f"stratified {k}-fold needs >= {k} samples per class; {short} has {counts.min()}")
        rng = np.random.default_rng(seed)
        fold_of = np.empty(n, dtype=np.int64)
        for cls in classes:
            rows = np.flatnonzero(dataset.y == cls)
            rng.shuffle(rows)
            fold_of[rows] = np.arange(len(rows)) % k
        folds = []
        for f in range(k):
            test = np.flatnonzero(fold_of == f)
            train = np.flatnonzero(fold_of != f)
            folds.append((train, test))
        return SplitPlan(variant=variant, seed=seed, folds=tuple(folds),
                         fold_names=tuple(f"fold{f:02d}" for f in range(k)))
    raise ValueError(f"unknown CV variant: {variant}")
