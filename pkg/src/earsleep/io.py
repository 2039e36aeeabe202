"""Canonical file formats: recordings, hypnograms, feature matrices, manifests.

All tables are UTF-8, comma-separated, LF line endings, with a header row.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ParseError
from .features import FEATURE_NAMES
from .hypnogram import Hypnogram, SleepStage
from .preprocessing import Recording

RECORDING_HEADER = ["timestamp_ms", "uV"]
HYPNOGRAM_HEADER = ["start_ms", "stage"]
META_COLUMNS = ["participant_id", "night_index", "epoch_start_ms", "label"]
MANIFEST_HEADER = ["participant_id", "night_index", "recording", "hypnogram", "onset_ms"]


def _read_table(path: Path | str, expected_header: list[str]) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise ParseError(f"no such file: {path}")
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise ParseError(f"{path.name}: empty file", line=1)
    except pd.errors.ParserError as exc:
        raise ParseError(f"{path.name}: {exc}")
    if list(df.columns) != expected_header:
        raise ParseError(f"{path.name}: expected header {','.join(expected_header)}", line=1)
    return df


def _numeric(df: pd.DataFrame, column: str, filename: str) -> np.ndarray:
    values = pd.to_numeric(df[column], errors="coerce").to_numpy()
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise ParseError(f"{filename}: bad value {df[column].iloc[bad[0]]!r} in column "
                         f"{column}", line=int(bad[0]) + 2)  # +2: header + 1-based
    return values


def _read_numeric_table(path: Path, expected_header: list[str]) -> pd.DataFrame:
    """Fast-path numeric read; falls back to a slow pass to localize bad lines."""
    if not path.exists():
        raise ParseError(f"no such file: {path}")
    try:
        df = pd.read_csv(path, dtype=np.float64)
        if list(df.columns) != expected_header:
            raise ParseError(f"{path.name}: expected header {','.join(expected_header)}", line=1)
        if all(np.isfinite(df[c].to_numpy()).all() for c in expected_header):
            return df
    except (ValueError, pd.errors.ParserError, pd.errors.EmptyDataError):
        pass
    df = _read_table(path, expected_header)  # localizes and raises with a line number
    for c in expected_header:
        _numeric(df, c, path.name)
    raise ParseError(f"{path.name}: unparseable numeric data")


def read_recording(path: Path | str, participant_id: str = "", night_index: int = 0) -> Recording:
    path = Path(path)
    df = _read_numeric_table(path, RECORDING_HEADER)
    if len(df) == 0:
        raise ParseError(f"{path.name}: no samples", line=2)
    t = df["timestamp_ms"].to_numpy()
    v = df["uV"].to_numpy()
    steps = np.diff(t)
    if np.any(steps <= 0):
        raise ParseError(f"{path.name}: timestamps not strictly increasing",
                         line=int(np.flatnonzero(steps <= 0)[0]) + 3)
    return Recording(participant_id=participant_id, night_index=night_index,
                     timestamps_ms=t, values_uv=v)


def write_recording(path: Path | str, recording: Recording) -> None:
    df = pd.DataFrame({"timestamp_ms": recording.timestamps_ms, "uV": recording.values_uv})
    df.to_csv(path, index=False, float_format="%.3f", lineterminator="\n")


def read_hypnogram(path: Path | str) -> Hypnogram:
    path = Path(path)
    df = _read_table(path, HYPNOGRAM_HEADER)
    if len(df) == 0:
        raise ParseError(f"{path.name}: no entries", line=2)
    starts = _numeric(df, "start_ms", path.name)
    stages = []
    for i, name in enumerate(df["stage"]):
        try:
            stages.append(SleepStage(name.strip()))
        except ValueError:
            raise ParseError(f"{path.name}: unknown stage {name!r}", line=i + 2)
    try:
        return Hypnogram(starts_ms=starts.astype(np.int64), stages=tuple(stages))
    except ValueError as exc:
        raise ParseError(f"{path.name}: {exc}")


def write_hypnogram(path: Path | str, hypnogram: Hypnogram) -> None:
    df = pd.DataFrame({"start_ms": hypnogram.starts_ms.astype(np.int64),
                       "stage": [s.value for s in hypnogram.stages]})
    df.to_csv(path, index=False, lineterminator="\n")


def feature_columns() -> list[str]:
    return META_COLUMNS + list(FEATURE_NAMES)


def write_feature_matrix(path: Path | str, df: pd.DataFrame) -> None:
    df.to_csv(path, index=False, float_format="%.12g", lineterminator="\n")


def read_feature_matrix(path: Path | str) -> pd.DataFrame:
    path = Path(path)
    expected = feature_columns()
    df = _read_table(path, expected)
    if len(df) == 0:
        raise ParseError(f"{path.name}: no rows", line=2)
    out = pd.DataFrame({
        "participant_id": df["participant_id"],
        "night_index": pd.to_numeric(df["night_index"]).astype(int),
        "epoch_start_ms": pd.to_numeric(df["epoch_start_ms"]),
        "label": df["label"],
    })
    for name in FEATURE_NAMES:
        out[name] = _numeric(df, name, path.name)
    bad = ~out["label"].isin([s.value for s in SleepStage])
    if bad.any():
        raise ParseError(f"{path.name}: unknown label {out['label'][bad].iloc[0]!r}",
                         line=int(np.flatnonzero(bad)[0]) + 2)
    return out


def write_manifest(path: Path | str, rows: list[dict]) -> None:
    pd.DataFrame(rows, columns=MANIFEST_HEADER).to_csv(path, index=False, lineterminator="\n")


def read_manifest(path: Path | str) -> pd.DataFrame:
    path = Path(path)
    df = _read_table(path, MANIFEST_HEADER)
    df["night_index"] = pd.to_numeric(df["night_index"]).astype(int)
    df["onset_ms"] = pd.to_numeric(df["onset_ms"])
    return df
