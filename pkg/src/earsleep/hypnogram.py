"""Sleep-stage labels, hypnograms, and the sleep-onset rule."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import OnsetUndefined

EPOCH_MS = 30_000


class SleepStage(Enum):
    AWAKE = "AWAKE"
    CORE = "CORE"
    DEEP = "DEEP"
    REM = "REM"

    @property
    def is_asleep(self) -> bool:
        return self is not SleepStage.AWAKE


# Fixed class orders used everywhere a label index matters.
STAGE_ORDER = ("AWAKE", "CORE", "DEEP", "REM")
BINARY_ORDER = ("AWAKE", "ASLEEP")


def to_binary(stage: str) -> str:
    """Collapse the four stages to Awake vs Asleep. Total and deterministic."""
    return "AWAKE" if stage == "AWAKE" else "ASLEEP"


@dataclass(frozen=True)
class Hypnogram:
    """Ordered 30-second stage labels.

    Entries are (start_ms, stage), non-overlapping and sorted; each entry
    covers [start_ms, start_ms + 30 s).
    """

    starts_ms: np.ndarray  # int64, sorted
    stages: tuple[SleepStage, ...]

    def __post_init__(self):
        starts = np.asarray(self.starts_ms, dtype=np.int64)
        object.__setattr__(self, "starts_ms", starts)
        object.__setattr__(self, "stages", tuple(self.stages))
        if len(starts) != len(self.stages):
            raise ValueError("starts_ms and stages length mismatch")
        if len(starts) > 1:
            gaps = np.diff(starts)
            if np.any(gaps < EPOCH_MS):
                raise ValueError("hypnogram entries overlap or are unsorted")

    def __len__(self) -> int:
        return len(self.stages)

    @property
    def end_ms(self) -> int:
        return int(self.starts_ms[-1]) + EPOCH_MS if len(self) else 0

    def binary_labels(self) -> np.ndarray:
        return np.array([to_binary(s.value) for s in self.stages])


def dominant_stage(hypnogram: Hypnogram, start_ms: float, end_ms: float) -> SleepStage | None:
    """Stage covering the majority of [start_ms, end_ms).

    Exact duration ties break toward the stage that appears earlier in the
    interval. Returns None when no entry overlaps the interval.
    """
    covered: dict[SleepStage, float] = {}
    first_seen: dict[SleepStage, float] = {}
    for entry_start, stage in zip(hypnogram.starts_ms, hypnogram.stages):
        lo = max(start_ms, float(entry_start))
        hi = min(end_ms, float(entry_start) + EPOCH_MS)
        if hi <= lo:
            continue
        covered[stage] = covered.get(stage, 0.0) + (hi - lo)
        first_seen.setdefault(stage, lo)
    if not covered:
        return None
    best = max(covered.values())
    tied = [s for s, d in covered.items() if d == best]
    return min(tied, key=lambda s: first_seen[s])


def onset_ms(starts_ms: Sequence[int] | np.ndarray, asleep: Sequence[bool] | np.ndarray,
             min_run: int = 3) -> int:
    """Start time of the first run of >= ``min_run`` consecutive Asleep epochs.

    The debounce suppresses isolated false Asleep epochs. Raises
    OnsetUndefined when no qualifying run exists.
    """
    asleep = np.asarray(asleep, dtype=bool)
    run = 0
    for i, a in enumerate(asleep):
        run = run + 1 if a else 0
        if run >= min_run:
            return int(starts_ms[i - min_run + 1])
    raise OnsetUndefined(f"no run of {min_run} consecutive Asleep epochs")
