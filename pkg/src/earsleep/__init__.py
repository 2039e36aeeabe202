"""Single-channel in-ear ExG sleep staging pipeline.

Signal conditioning, per-epoch feature extraction, SMOTE rebalancing, a
from-scratch random forest, cross-validated evaluation, and sleep-onset
analysis, plus a synthetic-cohort generator so the whole chain runs without
private recordings.
"""

__version__ = "0.1.0"

from .hypnogram import BINARY_ORDER, STAGE_ORDER, Hypnogram, SleepStage, to_binary
from .preprocessing import Epoch, FilterSpec, Recording

__all__ = [
    "BINARY_ORDER",
    "STAGE_ORDER",
    "Hypnogram",
    "SleepStage",
    "to_binary",
    "Epoch",
    "FilterSpec",
    "Recording",
    "__version__",
]
