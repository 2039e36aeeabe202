"""End-to-end orchestration: process recordings into feature matrices, run
cross-validated training/evaluation, compare sleep onsets, export spectrograms."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from . import dataset as ds
from . import evaluate as ev
from . import forest
from . import io as eio
from .errors import OnsetUndefined, SplitInfeasible
from .features import FEATURE_NAMES, IN_BAND_HI, IN_BAND_LO, extract_matrix, welch_psd
from .hypnogram import BINARY_ORDER, Hypnogram, to_binary
from .preprocessing import (ArtifactStatus, FilterSpec, Recording, apply_filter,
                            reject_artifacts, resample, segment)

WINDOW_SUFFIXES = ("_tm2", "_tm1", "_t0", "_tp1", "_tp2")


def windowed_feature_names() -> tuple[str, ...]:
    return tuple(f"{name}{suf}" for suf in WINDOW_SUFFIXES for name in FEATURE_NAMES)


# ---------------------------------------------------------------------------
# processing: recording -> labeled feature rows
# ---------------------------------------------------------------------------

def process_recording(recording: Recording, hypnogram: Hypnogram,
                      spec: FilterSpec | None = None,
                      ) -> tuple[pd.DataFrame, dict[str, int]]:
    """Resample, filter, segment, flag artifacts, and featurize clean epochs.

    Returns the feature rows (io.feature_columns order) plus the rejection
    summary {clean, amplitude_exceeded, low_variance}.
    """
    spec = spec or FilterSpec()
    rec = resample(recording)
    filtered = apply_filter(rec.values_uv, spec, rec.nominal_rate)
    rec = Recording(participant_id=rec.participant_id, night_index=rec.night_index,
                    timestamps_ms=rec.timestamps_ms, values_uv=filtered,
                    nominal_rate=rec.nominal_rate)
    epochs = reject_artifacts(segment(rec, hypnogram))
    counts = {
        "clean": sum(e.artifact is ArtifactStatus.CLEAN for e in epochs),
        "amplitude_exceeded": sum(e.artifact is ArtifactStatus.AMPLITUDE_EXCEEDED for e in epochs),
        "low_variance": sum(e.artifact is ArtifactStatus.LOW_VARIANCE for e in epochs),
    }
    clean = [e for e in epochs if e.artifact is ArtifactStatus.CLEAN]
    if not clean:
        return pd.DataFrame(columns=eio.feature_columns()), counts
    X = extract_matrix(np.stack([e.samples for e in clean]), rec.nominal_rate)
    df = pd.DataFrame(X, columns=list(FEATURE_NAMES))
    df.insert(0, "participant_id", recording.participant_id)
    df.insert(1, "night_index", recording.night_index)
    df.insert(2, "epoch_start_ms", [e.start_ms for e in clean])
    df.insert(3, "label", [e.label.value for e in clean])
    # degenerate epochs (NaN rows) are dropped: they carry no usable features
    finite = np.isfinite(X).all(axis=1)
    counts["degenerate"] = int((~finite).sum())
    return df[finite].reset_index(drop=True), counts


def process_manifest(manifest: pd.DataFrame, base_dir: Path,
                     spec: FilterSpec | None = None,
                     ) -> tuple[pd.DataFrame, dict[str, int]]:
    """Process every night listed in a cohort manifest into one feature table."""
    frames = []
    totals: dict[str, int] = {}
    for _, row in manifest.iterrows():
        recording = eio.read_recording(base_dir / row["recording"],
                                       participant_id=str(row["participant_id"]),
                                       night_index=int(row["night_index"]))
        hyp = eio.read_hypnogram(base_dir / row["hypnogram"])
        df, counts = process_recording(recording, hyp, spec)
        frames.append(df)
        for k, v in counts.items():
            totals[k] = totals.get(k, 0) + v
    return pd.concat(frames, ignore_index=True), totals


# ---------------------------------------------------------------------------
# cross-validated training and evaluation
# ---------------------------------------------------------------------------

@dataclass
class CVResult:
    task: ds.Task
    cv: ds.CVVariant
    seed: int
    windowed: bool
    class_order: tuple[str, ...]
    pooled: ev.ConfusionMatrix
    fold_table: pd.DataFrame
    per_participant: pd.DataFrame | None
    importances: pd.DataFrame
    final_model: forest.ForestModel
    split_plan: ds.SplitPlan

    @property
    def accuracy(self) -> float:
        return ev.accuracy(self.pooled)

    @property
    def kappa(self) -> float:
        return ev.cohens_kappa(self.pooled)


def _resolve_windowing(cv: ds.CVVariant, windowing: str) -> bool:
    if windowing == "auto":
        # temporal windows leak neighboring epochs across stratified folds,
        # so they are only applied for participant-held-out evaluation
        return cv == "lopo"
    if windowing in ("on", "off"):
        return windowing == "on"
    raise ValueError(f"windowing must be auto/on/off, got {windowing!r}")


def run_cv(features: pd.DataFrame, task: ds.Task, cv: ds.CVVariant, seed: int = 0,
           windowing: str = "auto", n_trees: int = forest.N_TREES,
           smote_k: int = ds.SMOTE_K) -> CVResult:
    """Run the full CV protocol: split, per-fold SMOTE on the training side
    only, train a forest per fold, evaluate, and fit one final model on all
    data. Deterministic for fixed (features, arguments)."""
    base = ds.from_feature_frame(features, task)
    present = np.unique(base.y)
    if len(present) < len(base.class_order):
        missing = [c for i, c in enumerate(base.class_order) if i not in present]
        raise SplitInfeasible(f"matrix lacks class(es) {', '.join(missing)} for task {task}")
    windowed = _resolve_windowing(cv, windowing)
    data = ds.window(base) if windowed else base
    plan = ds.make_splits(data, cv, seed=seed)
    rng = np.random.default_rng(seed)
    fold_seeds = rng.integers(0, 2 ** 62, size=(len(plan.folds), 2))
    final_seeds = rng.integers(0, 2 ** 62, size=2)
    feature_names = windowed_feature_names() if windowed else FEATURE_NAMES

    fold_rows = []
    fold_results = []
    all_true: list[np.ndarray] = []
    all_pred: list[np.ndarray] = []
    for f, (train_idx, test_idx) in enumerate(plan.folds):
        Xb, yb, _ = ds.smote(data.X[train_idx], data.y[train_idx],
                             k_neighbors=smote_k, seed=int(fold_seeds[f, 0]))
        model = forest.train(Xb, yb, data.class_order, feature_names=feature_names,
                             n_trees=n_trees, seed=int(fold_seeds[f, 1]), windowed=windowed)
        y_pred, _ = model.predict(data.X[test_idx])
        y_true = data.y[test_idx]
        cm = ev.confusion(y_true, y_pred, data.class_order)
        fold_rows.append({
            "fold": plan.fold_names[f],
            "n_train": len(train_idx),
            "n_test": len(test_idx),
            "accuracy": ev.accuracy(cm),
            "kappa": ev.cohens_kappa(cm),
        })
        fold_results.append({"participant": plan.fold_names[f],
                             "y_true": y_true, "y_pred": y_pred})
        all_true.append(y_true)
        all_pred.append(y_pred)

    pooled = ev.confusion(np.concatenate(all_true), np.concatenate(all_pred),
                          data.class_order)
    per_part = None
    if cv == "lopo":
        per_part = ev.per_participant(fold_results, data.class_order,
                                      positive="ASLEEP" if task == "binary" else "AWAKE")

    Xb, yb, _ = ds.smote(data.X, data.y, k_neighbors=smote_k, seed=int(final_seeds[0]))
    final_model = forest.train(Xb, yb, data.class_order, feature_names=feature_names,
                               n_trees=n_trees, seed=int(final_seeds[1]), windowed=windowed)
    importances = importance_table(final_model)
    return CVResult(task=task, cv=cv, seed=seed, windowed=windowed,
                    class_order=data.class_order, pooled=pooled,
                    fold_table=pd.DataFrame(fold_rows), per_participant=per_part,
                    importances=importances, final_model=final_model, split_plan=plan)


def importance_table(model: forest.ForestModel) -> pd.DataFrame:
    """Per-column importances; windowed columns also fold back onto the 26
    base features (summed over window positions)."""
    imp = model.feature_importances()
    df = pd.DataFrame({"feature": list(model.feature_names), "importance": imp})

    def base_name(name: str) -> str:
        for suf in WINDOW_SUFFIXES:
            if name.endswith(suf):
                return name[: -len(suf)]
        return name

    df["base_feature"] = [base_name(n) for n in model.feature_names]
    return df


def format_report(result: CVResult) -> str:
    """Human-readable metric report: aggregates, per-class rates, fold tables."""
    lines = [
        f"task: {result.task}    cv: {result.cv}    seed: {result.seed}    "
        f"windowed: {result.windowed}",
        "",
        f"aggregate accuracy: {result.accuracy:.3f}",
        f"aggregate kappa:    {result.kappa:.3f}",
        "",
        "per-class rates (pooled over folds):",
    ]
    metrics = ev.class_metrics(result.pooled)
    for _, row in metrics.iterrows():
        flag = "  [undefined]" if row["undefined"] else ""
        lines.append(f"  {row['class']:<8} sens {row['sensitivity']:.3f}  "
                     f"spec {row['specificity']:.3f}{flag}")
    lines += ["", "pooled confusion matrix (rows true, columns predicted):",
              result.pooled.to_frame().to_string(), "", "per-fold metrics:",
              result.fold_table.to_string(index=False, float_format=lambda v: f"{v:.3f}")]
    if result.per_participant is not None and len(result.per_participant):
        lines += ["", "per-participant metrics (held-out folds):",
                  result.per_participant.to_string(index=False,
                                                   float_format=lambda v: f"{v:.3f}")]
    lines += ["", "top feature importances:"]
    top = (result.importances.groupby("base_feature")["importance"].sum()
           .sort_values(ascending=False).head(10))
    for name, value in top.items():
        lines.append(f"  {name:<22} {value:.4f}")
    return "\n".join(lines) + "\n"


def write_cv_outputs(result: CVResult, outdir: Path, figures: bool = True) -> dict[str, Path]:
    """Write the report, delimited tables, model, and (optionally) figures."""
    from . import plots  # deferred: matplotlib is heavy

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}

    def _w(name: str, path: Path) -> Path:
        written[name] = path
        return path

    _w("report", outdir / "report.txt").write_text(format_report(result), encoding="utf-8")
    result.pooled.to_frame().to_csv(_w("confusion", outdir / "confusion_pooled.csv"))
    result.fold_table.to_csv(_w("folds", outdir / "fold_metrics.csv"), index=False,
                             float_format="%.6f", lineterminator="\n")
    ev.class_metrics(result.pooled).to_csv(_w("class_metrics", outdir / "class_metrics.csv"),
                                           index=False, float_format="%.6f", lineterminator="\n")
    if result.per_participant is not None:
        result.per_participant.to_csv(
            _w("participants", outdir / "participant_metrics.csv"), index=False,
            float_format="%.6f", lineterminator="\n")
    result.importances.to_csv(_w("importances", outdir / "importances.csv"), index=False,
                              float_format="%.9f", lineterminator="\n")
    result.split_plan.to_table().to_csv(_w("splits", outdir / "splits.csv"), index=False,
                                        lineterminator="\n")
    forest.save(result.final_model, _w("model", outdir / "model.json"))
    if figures:
        plots.confusion_figure(result.pooled, _w("confusion_png", outdir / "confusion_pooled.png"),
                               title=f"{result.task} / {result.cv}")
        plots.importances_figure(result.importances,
                                 _w("importances_png", outdir / "importances.png"))
        if result.per_participant is not None and len(result.per_participant):
            plots.participant_metrics_figure(
                result.per_participant, _w("participants_png", outdir / "participant_metrics.png"))
    return written


# ---------------------------------------------------------------------------
# sleep-onset comparison
# ---------------------------------------------------------------------------

def predict_night(model: forest.ForestModel, features: pd.DataFrame) -> pd.DataFrame:
    """Per-epoch predicted labels for one night's feature rows."""
    task: ds.Task = "binary" if model.class_order == BINARY_ORDER else "multistage"
    data = ds.from_feature_frame(features, task)
    if model.windowed:
        data = ds.window(data)
    pred, _ = model.predict(data.X)
    return pd.DataFrame({
        "epoch_start_ms": data.epoch_start_ms,
        "true_label": [data.class_order[i] for i in data.y],
        "predicted_label": [model.class_order[i] for i in pred],
    })


def onset_comparison(model: forest.ForestModel, features: pd.DataFrame,
                     recording_id: str = "", reference_onset_ms: float | None = None,
                     ) -> ev.OnsetRow:
    """Signed sleep-onset delay of the classifier vs the reference labels.

    Both sides are read on the night's clean-epoch grid with the same
    3-consecutive-epoch rule, unless the reference supplies its own onset.
    """
    night = predict_night(model, features)
    pred_asleep = night["predicted_label"].map(to_binary).to_numpy() == "ASLEEP"
    ref_asleep = night["true_label"].map(to_binary).to_numpy() == "ASLEEP"
    return ev.onset_delay(night["epoch_start_ms"].to_numpy(), pred_asleep, ref_asleep,
                          recording_id=recording_id, reference_onset_ms=reference_onset_ms)


def cohort_onsets(model: forest.ForestModel, features: pd.DataFrame,
                  reference_onsets: dict[str, float] | None = None) -> pd.DataFrame:
    """Per-recording onset rows plus undefined flags, Fig-8 style."""
    reference_onsets = reference_onsets or {}
    rows = []
    keys = features[["participant_id", "night_index"]].drop_duplicates()
    for _, key in keys.iterrows():
        sub = features[(features["participant_id"] == key["participant_id"])
                       & (features["night_index"] == key["night_index"])]
        rid = f"{key['participant_id']}/n{key['night_index']}"
        try:
            row = onset_comparison(model, sub, recording_id=rid,
                                   reference_onset_ms=reference_onsets.get(rid))
            rows.append({"recording_id": rid,
                         "predicted_onset_ms": row.predicted_onset_ms,
                         "reference_onset_ms": row.reference_onset_ms,
                         "delay_minutes": row.delay_minutes,
                         "defined": True})
        except OnsetUndefined:
            rows.append({"recording_id": rid, "predicted_onset_ms": np.nan,
                         "reference_onset_ms": np.nan, "delay_minutes": np.nan,
                         "defined": False})
    return pd.DataFrame(rows)


# ---------------------------------------------------------------------------
# spectrogram export
# ---------------------------------------------------------------------------

def spectrogram_table(recording: Recording, hypnogram: Hypnogram,
                      spec: FilterSpec | None = None) -> pd.DataFrame:
    """Per-epoch Welch PSD rows over 0.5-30 Hz with the aligned stage.

    All segmented epochs appear (artifact flags do not apply to this export);
    rows are the time axis, columns the frequency bins.
    """
    spec = spec or FilterSpec()
    rec = resample(recording)
    filtered = apply_filter(rec.values_uv, spec, rec.nominal_rate)
    rec = Recording(participant_id=rec.participant_id, night_index=rec.night_index,
                    timestamps_ms=rec.timestamps_ms, values_uv=filtered,
                    nominal_rate=rec.nominal_rate)
    epochs = segment(rec, hypnogram)
    X = np.stack([e.samples for e in epochs])
    freqs, psd = welch_psd(X, rec.nominal_rate)
    band = (freqs >= IN_BAND_LO) & (freqs <= IN_BAND_HI)
    out = pd.DataFrame(psd[:, band], columns=[f"psd_{f:.2f}Hz" for f in freqs[band]])
    out.insert(0, "epoch_start_ms", [e.start_ms for e in epochs])
    out.insert(1, "stage", [e.label.value for e in epochs])
    return out
