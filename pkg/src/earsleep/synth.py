"""Synthetic labeled sleep recordings with stage-dependent spectral content.

Signals are sums of band-limited noise streams whose per-epoch gains follow a
seeded Markov chain over the four stages, plus broadband noise and optional
movement-artifact bursts. Shaped noise (not tones) keeps classification
non-trivial while preserving the stage-wise band-power structure visible in
real sleep ExG: deep sleep dominated by delta, wake by alpha/beta.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .errors import OnsetUndefined
from .hypnogram import EPOCH_MS, Hypnogram, SleepStage, onset_ms
from .preprocessing import Recording, TARGET_RATE_HZ

EPOCH_S = EPOCH_MS // 1000
BAND_EDGES = ((0.5, 4.0), (4.0, 8.0), (8.0, 12.0), (12.0, 30.0))
STAGES = (SleepStage.AWAKE, SleepStage.CORE, SleepStage.DEEP, SleepStage.REM)

# Per-epoch transition probabilities [from][to] over (AWAKE, CORE, DEEP, REM):
# wake-biased start, sleep-cycle-like flow Awake->Core->Deep->Core->REM.
TRANSITIONS = np.array([
    [0.920, 0.080, 0.000, 0.000],
    [0.015, 0.935, 0.030, 0.020],
    [0.005, 0.050, 0.945, 0.000],
    [0.025, 0.045, 0.000, 0.930],
])


@dataclass(frozen=True)
class StageProfile:
    """Band RMS amplitudes (uV) plus broadband noise and artifact rate."""

    band_rms_uv: tuple[float, float, float, float]  # delta, theta, alpha, beta
    broadband_rms_uv: float
    spike_prob: float = 0.0


# Deep >> Core > REM ~= Awake in delta; Awake strongest in alpha/beta.
DEFAULT_PROFILES: dict[SleepStage, StageProfile] = {
    SleepStage.AWAKE: StageProfile((3.0, 2.5, 7.0, 5.0), 3.0, spike_prob=0.04),
    SleepStage.CORE: StageProfile((8.0, 5.0, 2.5, 1.5), 3.0, spike_prob=0.005),
    SleepStage.DEEP: StageProfile((17.0, 4.0, 1.5, 1.0), 3.0, spike_prob=0.002),
    SleepStage.REM: StageProfile((3.0, 5.0, 2.5, 2.5), 3.0, spike_prob=0.002),
}

SPIKE_AMPLITUDE_UV = 1200.0
SPIKE_FREQ_HZ = 3.0
SPIKE_DURATION_S = 2.0
TIMESTAMP_JITTER_MS = 1.8  # < 2 ms so jittered stamps stay strictly increasing


@dataclass(frozen=True)
class SyntheticNight:
    recording: Recording
    hypnogram: Hypnogram
    onset_ms: float | None  # ground-truth sleep onset; None if never asleep
    profiles: dict[SleepStage, StageProfile] = field(repr=False, default=None)


def _stage_sequence(n_epochs: int, rng: np.random.Generator) -> list[SleepStage]:
    seq = [SleepStage.AWAKE]  # wake-biased start
    state = 0
    for _ in range(n_epochs - 1):
        state = rng.choice(4, p=TRANSITIONS[state])
        seq.append(STAGES[state])
    return seq


def _band_noise(n: int, lo: float, hi: float, rate: float,
                rng: np.random.Generator) -> np.ndarray:
    sos = sps.butter(4, [lo, hi], btype="bandpass", output="sos", fs=rate)
    x = sps.sosfilt(sos, rng.standard_normal(n))
    return x / x.std()


def gen_night(duration_min: float, profiles: dict[SleepStage, StageProfile] | None = None,
              seed: int = 0, participant_id: str = "p01", night_index: int = 1,
              rate: float = TARGET_RATE_HZ) -> SyntheticNight:
    """Generate one night: hypnogram, jitter-timestamped recording, true onset.

    Deterministic per (arguments, seed); timestamps sit on the nominal
    1/rate grid with +-1.8 ms jitter to exercise resampling.
    """
    if duration_min < 10:
        raise ValueError("night must be at least 10 minutes")
    profiles = profiles if profiles is not None else DEFAULT_PROFILES
    rng = np.random.default_rng(seed)
    n_epochs = int(duration_min * 60 // EPOCH_S)
    stages = _stage_sequence(n_epochs, rng)
    n_per_epoch = int(EPOCH_S * rate)
    n = n_epochs * n_per_epoch

    values = np.zeros(n)
    for b, (lo, hi) in enumerate(BAND_EDGES):
        stream = _band_noise(n, lo, hi, rate, rng)
        gains = np.repeat([profiles[s].band_rms_uv[b] for s in stages], n_per_epoch)
        values += gains * stream
    broadband = rng.standard_normal(n)
    values += np.repeat([profiles[s].broadband_rms_uv for s in stages], n_per_epoch) * broadband

    # movement-artifact bursts, kept clear of epoch edges so the bandpass
    # ringing cannot spill a flag into a neighboring epoch
    spike = np.hanning(int(SPIKE_DURATION_S * rate))
    spike = spike * np.sin(2 * np.pi * SPIKE_FREQ_HZ * np.arange(spike.size) / rate)
    for e, stage in enumerate(stages):
        if rng.random() < profiles[stage].spike_prob:
            margin = int(6 * rate)
            at = e * n_per_epoch + margin + int(rng.integers(0, n_per_epoch - 2 * margin - spike.size))
            values[at:at + spike.size] += SPIKE_AMPLITUDE_UV * spike

    dt = 1000.0 / rate
    timestamps = dt * np.arange(n) + rng.uniform(-TIMESTAMP_JITTER_MS, TIMESTAMP_JITTER_MS, n)
    recording = Recording(participant_id=participant_id, night_index=night_index,
                          timestamps_ms=timestamps, values_uv=values, nominal_rate=rate)
    hyp = Hypnogram(starts_ms=np.arange(n_epochs, dtype=np.int64) * EPOCH_MS,
                    stages=tuple(stages))
    try:
        true_onset = float(onset_ms(hyp.starts_ms, [s.is_asleep for s in stages]))
    except OnsetUndefined:
        true_onset = None
    return SyntheticNight(recording=recording, hypnogram=hyp, onset_ms=true_onset,
                          profiles=profiles)


def perturb_profiles(base: dict[SleepStage, StageProfile],
                     rng: np.random.Generator) -> dict[SleepStage, StageProfile]:
    """Participant-specific profile: every stage/band weight scaled by an
    independent factor in [0.7, 1.3]."""
    out = {}
    for stage, prof in base.items():
        factors = rng.uniform(0.7, 1.3, size=5)
        out[stage] = StageProfile(
            band_rms_uv=tuple(w * f for w, f in zip(prof.band_rms_uv, factors[:4])),
            broadband_rms_uv=prof.broadband_rms_uv * factors[4],
            spike_prob=prof.spike_prob,
        )
    return out


def paper_night_plan(n_participants: int) -> list[int]:
    """Nights per participant; for 11 participants this is the 8/2/1 plan
    (eight sleep one night, two sleep two, one sleeps three) totalling 15."""
    if n_participants == 11:
        return [1] * 8 + [2, 2, 3]
    return [1] * n_participants


def gen_cohort(n_participants: int, nights_per_participant: list[int] | int | None = None,
               duration_min: float = 350.0, seed: int = 0,
               base_profiles: dict[SleepStage, StageProfile] | None = None,
               ) -> list[SyntheticNight]:
    """Generate a multi-participant cohort with inter-subject variability.

    Each participant gets a seeded perturbation of the base profiles, so
    leave-one-participant-out evaluation faces genuinely unseen signal
    statistics.
    """
    if n_participants < 2:
        raise ValueError("cohort needs at least 2 participants")
    if nights_per_participant is None:
        nights_per_participant = paper_night_plan(n_participants)
    if isinstance(nights_per_participant, int):
        nights_per_participant = [nights_per_participant] * n_participants
    if len(nights_per_participant) != n_participants:
        raise ValueError("nights_per_participant length must match n_participants")
    base = base_profiles if base_profiles is not None else DEFAULT_PROFILES
    master = np.random.default_rng(seed)
    nights = []
    for p, n_nights in enumerate(nights_per_participant, start=1):
        pid = f"p{p:02d}"
        profiles = perturb_profiles(base, master)
        for night in range(1, n_nights + 1):
            night_seed = int(master.integers(0, 2 ** 63))
            nights.append(gen_night(duration_min, profiles, seed=night_seed,
                                    participant_id=pid, night_index=night))
    return nights
