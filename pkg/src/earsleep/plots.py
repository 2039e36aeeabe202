"""Matplotlib figure rendering for report outputs.

Every renderer writes a PNG next to the delimited tables; the tables remain
the canonical interchange and nothing here feeds back into the pipeline.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from .evaluate import ConfusionMatrix

STAGE_LEVELS = {"AWAKE": 3, "REM": 2, "CORE": 1, "DEEP": 0}
DPI = 150


def _save(fig, path: Path | str) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=DPI, bbox_inches="tight")
    plt.close(fig)
    return path


def confusion_figure(cm: ConfusionMatrix, path: Path | str, title: str = "") -> Path:
    """Row-normalized confusion heat map with counts annotated."""
    counts = cm.counts
    with np.errstate(invalid="ignore"):
        norm = counts / counts.sum(axis=1, keepdims=True)
    k = len(cm.class_order)
    fig, ax = plt.subplots(figsize=(1.1 * k + 1.6, 1.1 * k + 1.2))
    im = ax.imshow(np.nan_to_num(norm), cmap="Blues", vmin=0, vmax=1)
    ax.set_xticks(range(k), [c.title() for c in cm.class_order])
    ax.set_yticks(range(k), [c.title() for c in cm.class_order])
    ax.set_xlabel("Predicted")
    ax.set_ylabel("Reference")
    for i in range(k):
        for j in range(k):
            color = "white" if norm[i, j] > 0.5 else "black"
            ax.text(j, i, f"{counts[i, j]}\n{norm[i, j]:.2f}", ha="center",
                    va="center", color=color, fontsize=9)
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax, fraction=0.046)
    return _save(fig, path)


def participant_metrics_figure(per_participant: pd.DataFrame, path: Path | str) -> Path:
    """Per-participant accuracy, sensitivity/specificity, and F1 bars."""
    df = per_participant
    x = np.arange(len(df))
    fig, axes = plt.subplots(3, 1, figsize=(max(6, 0.8 * len(df)), 8), sharex=True)
    axes[0].bar(x, df["accuracy"], color="#4878cf")
    axes[0].set_ylabel("Accuracy")
    width = 0.4
    axes[1].bar(x - width / 2, df["sensitivity"], width, label="Sensitivity", color="#6acc65")
    axes[1].bar(x + width / 2, df["specificity"], width, label="Specificity", color="#d65f5f")
    axes[1].set_ylabel("Rate")
    axes[1].legend(loc="lower right", fontsize=8)
    axes[2].bar(x, df["f1"], color="#956cb4")
    axes[2].set_ylabel("F1")
    axes[2].set_xticks(x, df["participant_id"], rotation=45)
    for ax in axes:
        ax.set_ylim(0, 1.05)
        ax.grid(axis="y", alpha=0.3)
    fig.align_ylabels(axes)
    return _save(fig, path)


def importances_figure(importances: pd.DataFrame, path: Path | str, top: int = 26) -> Path:
    """Ranked feature importances, aggregated over window positions."""
    agg = (importances.groupby("base_feature")["importance"].sum()
           .sort_values(ascending=True).tail(top))
    fig, ax = plt.subplots(figsize=(6, 0.3 * len(agg) + 1.2))
    ax.barh(np.arange(len(agg)), agg.to_numpy(), color="#4878cf")
    ax.set_yticks(np.arange(len(agg)), agg.index)
    ax.set_xlabel("Impurity-decrease importance")
    ax.grid(axis="x", alpha=0.3)
    return _save(fig, path)


def onset_delays_figure(onsets: pd.DataFrame, path: Path | str) -> Path:
    """Signed per-recording onset delays with the mean absolute delay."""
    df = onsets[onsets["defined"]].reset_index(drop=True)
    x = np.arange(len(df))
    colors = np.where(df["delay_minutes"] >= 0, "#d65f5f", "#4878cf")
    fig, ax = plt.subplots(figsize=(max(6, 0.6 * len(df)), 4))
    ax.bar(x, df["delay_minutes"], color=colors)
    ax.axhline(0, color="black", lw=0.8)
    if len(df):
        mad = df["delay_minutes"].abs().mean()
        ax.axhline(mad, color="gray", ls="--", lw=0.8, label=f"mean |delay| = {mad:.1f} min")
        ax.legend(fontsize=8)
    ax.set_xticks(x, df["recording_id"], rotation=45, fontsize=7)
    ax.set_ylabel("Onset delay (min)\nclassifier later  ↑")
    ax.grid(axis="y", alpha=0.3)
    return _save(fig, path)


def spectrogram_figure(table: pd.DataFrame, path: Path | str) -> Path:
    """Time-frequency heat map (log power) with the stage sequence on top."""
    psd_cols = [c for c in table.columns if c.startswith("psd_")]
    freqs = np.array([float(c[4:-2]) for c in psd_cols])
    power = table[psd_cols].to_numpy().T
    hours = table["epoch_start_ms"].to_numpy() / 3.6e6
    levels = table["stage"].map(STAGE_LEVELS).to_numpy()
    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(10, 5), sharex=True,
                                   gridspec_kw={"height_ratios": [1, 3]})
    ax0.step(hours, levels, where="post", color="#333333", lw=1)
    ax0.set_yticks(sorted(set(STAGE_LEVELS.values())),
                   [s.title() for s in sorted(STAGE_LEVELS, key=STAGE_LEVELS.get)])
    ax0.set_ylim(-0.5, 3.5)
    ax0.grid(axis="y", alpha=0.3)
    with np.errstate(divide="ignore"):
        db = 10 * np.log10(np.maximum(power, 1e-12))
    pc = ax1.pcolormesh(hours, freqs, db, shading="auto", cmap="magma")
    ax1.set_xlabel("Time (h)")
    ax1.set_ylabel("Frequency (Hz)")
    fig.colorbar(pc, ax=ax1, label="Power (dB uV$^2$/Hz)", fraction=0.046)
    return _save(fig, path)
