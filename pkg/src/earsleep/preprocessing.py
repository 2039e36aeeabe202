"""Signal conditioning: resampling, bandpass filtering, epoching, artifact flags."""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from scipy import signal as sps

from .errors import EmptyRecording, InvalidCutoff, NoOverlap, NonFiniteSample
from .hypnogram import EPOCH_MS, Hypnogram, SleepStage, dominant_stage

TARGET_RATE_HZ = 250.0
EPOCH_SAMPLES = int(EPOCH_MS / 1000 * TARGET_RATE_HZ)  # 7500
AMP_LIMIT_UV = 500.0
VAR_FLOOR_UV2 = 1.0


@dataclass(frozen=True)
class Recording:
    """Timestamped single-channel biopotential trace in microvolts."""

    participant_id: str
    night_index: int
    timestamps_ms: np.ndarray
    values_uv: np.ndarray
    nominal_rate: float = TARGET_RATE_HZ

    def __post_init__(self):
        object.__setattr__(self, "timestamps_ms", np.asarray(self.timestamps_ms, dtype=np.float64))
        object.__setattr__(self, "values_uv", np.asarray(self.values_uv, dtype=np.float64))
        if self.timestamps_ms.shape != self.values_uv.shape:
            raise ValueError("timestamps and values must have the same length")

    def __len__(self) -> int:
        return len(self.values_uv)


class ArtifactStatus(Enum):
    CLEAN = "CLEAN"
    AMPLITUDE_EXCEEDED = "AMPLITUDE_EXCEEDED"
    LOW_VARIANCE = "LOW_VARIANCE"


@dataclass
class Epoch:
    """One 30-second block of filtered samples at exactly 250 Hz."""

    start_ms: float
    samples: np.ndarray  # shape (7500,)
    label: SleepStage
    artifact: ArtifactStatus = ArtifactStatus.CLEAN


@dataclass(frozen=True)
class FilterSpec:
    """Butterworth bandpass, cascaded second-order sections.

    ``order`` follows the usual design convention (prototype order; a
    bandpass of order N has 2N poles, i.e. N biquad sections).
    """

    order: int = 4
    low_cut_hz: float = 0.5
    high_cut_hz: float = 30.0
    zero_phase: bool = True


def resample(recording: Recording, target_rate: float = TARGET_RATE_HZ) -> Recording:
    """Linear-interpolate onto a uniform grid anchored at the first timestamp.

    The output span is the input span truncated to whole output samples.
    """
    if len(recording) < 2:
        raise EmptyRecording("need at least 2 samples to resample")
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    t = recording.timestamps_ms
    dt = 1000.0 / target_rate
    n_out = int(np.floor((t[-1] - t[0]) / dt)) + 1
    out_t = t[0] + dt * np.arange(n_out)
    out_v = np.interp(out_t, t, recording.values_uv)
    return replace(recording, timestamps_ms=out_t, values_uv=out_v, nominal_rate=target_rate)


def design_bandpass(spec: FilterSpec, rate: float = TARGET_RATE_HZ) -> np.ndarray:
    """Return SOS coefficients for the Butterworth bandpass of ``spec``."""
    nyq = rate / 2.0
    if not (0.0 < spec.low_cut_hz < spec.high_cut_hz < nyq):
        raise InvalidCutoff(
            f"need 0 < low ({spec.low_cut_hz}) < high ({spec.high_cut_hz}) < Nyquist ({nyq})"
        )
    return sps.butter(spec.order, [spec.low_cut_hz, spec.high_cut_hz],
                      btype="bandpass", output="sos", fs=rate)


def bandpass_gain(spec: FilterSpec, freqs_hz, rate: float = TARGET_RATE_HZ) -> np.ndarray:
    """Magnitude response of the designed filter at the given frequencies."""
    sos = design_bandpass(spec, rate)
    _, h = sps.sosfreqz(sos, worN=np.atleast_1d(np.asarray(freqs_hz, dtype=float)), fs=rate)
    return np.abs(h)


def apply_filter(samples: np.ndarray, spec: FilterSpec, rate: float = TARGET_RATE_HZ) -> np.ndarray:
    """Filter a sample stream; output length equals input length.

    Zero-phase mode runs a forward-backward pass (no phase distortion);
    causal mode is a single forward pass for online use.
    """
    x = np.asarray(samples, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise NonFiniteSample("input contains NaN or Inf")
    sos = design_bandpass(spec, rate)
    if spec.zero_phase:
        return sps.sosfiltfilt(sos, x)
    return sps.sosfilt(sos, x)


def segment(recording: Recording, hypnogram: Hypnogram) -> list[Epoch]:
    """Cut a resampled, filtered recording into labeled 30-second epochs.

    Produces one epoch per hypnogram entry whose 30-second window is fully
    covered by the recording; partially covered entries are dropped. Labels
    come from the stage covering the majority of the window (ties toward
    the earlier stage).
    """
    t = recording.timestamps_ms
    if len(recording) < 2:
        raise EmptyRecording("recording too short to segment")
    dt = 1000.0 / recording.nominal_rate
    rec_start, rec_end = t[0], t[-1] + dt
    if len(hypnogram) == 0 or rec_end <= hypnogram.starts_ms[0] or rec_start >= hypnogram.end_ms:
        raise NoOverlap("recording and hypnogram do not overlap in time")
    n_per_epoch = int(round(EPOCH_MS / dt))
    epochs: list[Epoch] = []
    for start in hypnogram.starts_ms:
        # first sample index falling inside [start, start + dt)
        i0 = int(np.ceil((start - t[0]) / dt - 1e-9))
        i0 = max(i0, 0)
        if t[0] + i0 * dt >= start + dt - 1e-9:
            continue  # recording begins after the epoch's first sample slot
        if i0 + n_per_epoch > len(recording):
            continue
        label = dominant_stage(hypnogram, float(start), float(start) + EPOCH_MS)
        if label is None:
            continue
        epochs.append(Epoch(start_ms=float(start),
                            samples=recording.values_uv[i0:i0 + n_per_epoch],
                            label=label))
    return epochs


def reject_artifacts(epochs: list[Epoch], amp_limit: float = AMP_LIMIT_UV,
                     var_floor: float = VAR_FLOOR_UV2) -> list[Epoch]:
    """Annotate each epoch's artifact status; nothing is deleted.

    AmplitudeExceeded when any |sample| > amp_limit (movement artifacts);
    LowVariance when sample variance < var_floor (flat signal, the
    automated proxy for a dislodged earpiece); Clean otherwise.
    """
    out = []
    for ep in epochs:
        if np.max(np.abs(ep.samples)) > amp_limit:
            status = ArtifactStatus.AMPLITUDE_EXCEEDED
        elif np.var(ep.samples) < var_floor:
            status = ArtifactStatus.LOW_VARIANCE
        else:
            status = ArtifactStatus.CLEAN
        out.append(replace(ep, artifact=status))
    return out
