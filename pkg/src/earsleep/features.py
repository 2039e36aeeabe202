"""Per-epoch feature suite: time-domain stats, Welch band powers, spectral
descriptors, Morlet CWT band percentiles, and Lempel-Ziv complexity."""

from __future__ import annotations

import numpy as np
from numba import njit, prange
from scipy import fft as spfft
from scipy import signal as sps

from .errors import DegenerateEpoch
from .preprocessing import EPOCH_SAMPLES, TARGET_RATE_HZ

# Classical EEG bands (Hz). Half-open [low, high) except beta includes 30.
BANDS = (("delta", 0.5, 4.0), ("theta", 4.0, 8.0), ("alpha", 8.0, 12.0), ("beta", 12.0, 30.0))
IN_BAND_LO, IN_BAND_HI = 0.5, 30.0

WELCH_NPERSEG = 1000  # 4 s at 250 Hz -> 0.25 Hz resolution
WELCH_OVERLAP = 500
MORLET_W0 = 6.0
CWT_VOICES = 10
SEF_PERCENTILE = 0.95
POWER_EPS = 1e-12  # uV^2 guard for ratio denominators

FEATURE_NAMES = (
    "std", "variance", "skewness", "kurtosis", "zero_crossing_rate", "p75",
    "hjorth_mobility", "hjorth_complexity",
    "rel_power_delta", "rel_power_theta", "rel_power_alpha", "rel_power_beta",
    "ratio_delta_theta", "ratio_theta_alpha", "ratio_alpha_beta", "ratio_slow_fast",
    "spectral_entropy", "spectral_edge_freq", "peak_freq", "median_freq", "mean_freq_diff",
    "cwt_p75_delta", "cwt_p75_theta", "cwt_p75_alpha", "cwt_p75_beta",
    "lempel_ziv",
)
N_FEATURES = len(FEATURE_NAMES)


# ---------------------------------------------------------------------------
# time-domain statistics
# ---------------------------------------------------------------------------

def time_domain(x: np.ndarray) -> np.ndarray:
    """std, variance, Fisher skewness, excess kurtosis, zero-crossing rate,
    75th percentile, Hjorth mobility, Hjorth complexity."""
    out = _time_domain_block(np.asarray(x, dtype=np.float64)[None, :])
    if not np.isfinite(out).all():
        raise DegenerateEpoch("zero-variance epoch has undefined time-domain features")
    return out[0]


def _time_domain_block(x: np.ndarray) -> np.ndarray:
    n = x.shape[1]
    mean = x.mean(axis=1, keepdims=True)
    dev = x - mean
    m2 = np.mean(dev ** 2, axis=1)
    m3 = np.mean(dev ** 3, axis=1)
    m4 = np.mean(dev ** 4, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        skew = m3 / m2 ** 1.5
        kurt = m4 / m2 ** 2 - 3.0
        zcr = np.count_nonzero(x[:, 1:] * x[:, :-1] < 0, axis=1) / (n - 1)
        p75 = np.percentile(x, 75, axis=1)
        d1 = np.diff(x, axis=1)
        d2 = np.diff(d1, axis=1)
        v0, v1, v2 = m2, d1.var(axis=1), d2.var(axis=1)
        mobility = np.sqrt(v1 / v0)
        complexity = np.sqrt(v2 / v1) / mobility
    return np.column_stack([np.sqrt(m2), m2, skew, kurt, zcr, p75, mobility, complexity])


# ---------------------------------------------------------------------------
# Welch PSD and band powers
# ---------------------------------------------------------------------------

def welch_psd(x: np.ndarray, rate: float = TARGET_RATE_HZ,
              nperseg: int = WELCH_NPERSEG) -> tuple[np.ndarray, np.ndarray]:
    """One-sided Welch PSD (Hann window, 50% overlap), uV^2/Hz.

    Works on a single epoch (1-D) or a stack of epochs (2-D, epochs x samples);
    the PSD is returned along the last axis.
    """
    x = np.asarray(x, dtype=np.float64)
    nperseg = min(nperseg, x.shape[-1])
    freqs, psd = sps.welch(x, fs=rate, window="hann", nperseg=nperseg,
                           noverlap=nperseg // 2, detrend="constant", axis=-1)
    return freqs, psd


def _band_masks(freqs: np.ndarray) -> list[np.ndarray]:
    masks = []
    for i, (_, lo, hi) in enumerate(BANDS):
        if i < len(BANDS) - 1:
            masks.append((freqs >= lo) & (freqs < hi))
        else:
            masks.append((freqs >= lo) & (freqs <= hi))
    return masks


def band_powers(freqs: np.ndarray, psd: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Relative band powers over 0.5-30 Hz plus the four power ratios.

    Returns (rel[delta, theta, alpha, beta], ratios[d/t, t/a, a/b, (t+d)/(a+b)])
    for a single PSD, or per-row stacks for a 2-D PSD block.
    """
    if psd.ndim == 1:
        rel, ratios = _band_powers_block(freqs, psd[None, :])
        if rel[0].sum() == 0.0:
            raise DegenerateEpoch("total in-band power below guard")
        return rel[0], ratios[0]
    return _band_powers_block(freqs, psd)


def _band_powers_block(freqs: np.ndarray, psd: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    df = freqs[1] - freqs[0]
    absolute = np.column_stack([psd[:, m].sum(axis=1) * df for m in _band_masks(freqs)])
    total = absolute.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = absolute / total[:, None]
    rel[total == 0.0] = 0.0
    d, t, a, b = absolute.T
    ratios = np.column_stack([
        d / np.maximum(t, POWER_EPS),
        t / np.maximum(a, POWER_EPS),
        a / np.maximum(b, POWER_EPS),
        (t + d) / np.maximum(a + b, POWER_EPS),
    ])
    return rel, ratios


def spectral_descriptors(freqs: np.ndarray, psd: np.ndarray) -> np.ndarray:
    """entropy (normalized, in [0,1]), 95% spectral edge, peak, median frequency
    over the 0.5-30 Hz band."""
    if psd.ndim == 1:
        out = _spectral_block(freqs, psd[None, :])[0]
        if not np.isfinite(out).all():
            raise DegenerateEpoch("zero in-band power")
        return out
    return _spectral_block(freqs, psd)


def _spectral_block(freqs: np.ndarray, psd: np.ndarray) -> np.ndarray:
    band = (freqs >= IN_BAND_LO) & (freqs <= IN_BAND_HI)
    f = freqs[band]
    p = psd[:, band]
    total = p.sum(axis=1)
    ok = total > 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        prob = p / total[:, None]
    logp = np.zeros_like(prob)
    np.log(prob, out=logp, where=prob > 0)
    entropy = -(prob * logp).sum(axis=1) / np.log(len(f))
    cum = np.cumsum(p, axis=1)
    edge = f[np.argmax(cum >= SEF_PERCENTILE * total[:, None], axis=1)]
    median = f[np.argmax(cum >= 0.5 * total[:, None], axis=1)]
    peak = f[np.argmax(p, axis=1)]
    out = np.column_stack([entropy, edge, peak, median])
    out[~ok] = np.nan
    return out


def _centroid(freqs: np.ndarray, psd: np.ndarray) -> np.ndarray:
    band = (freqs >= IN_BAND_LO) & (freqs <= IN_BAND_HI)
    f = freqs[band]
    p = psd[:, band]
    total = p.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = (p * f).sum(axis=1) / total
    c[total == 0.0] = np.nan
    return c


def mean_freq_diff(x: np.ndarray, rate: float = TARGET_RATE_HZ) -> np.ndarray:
    """Spectral-centroid drift within the epoch: centroid of the second half
    minus centroid of the first half, both with the standard Welch settings."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    half = x.shape[1] // 2
    fa, pa = welch_psd(x[:, :half], rate)
    fb, pb = welch_psd(x[:, half:2 * half], rate)
    return _centroid(fb, pb) - _centroid(fa, pa)


# ---------------------------------------------------------------------------
# Morlet continuous wavelet transform
# ---------------------------------------------------------------------------

def _cwt_scales(rate: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-band pseudo-frequencies (log-uniform, CWT_VOICES per band) and the
    matching Morlet scales in samples."""
    freqs = np.concatenate([np.geomspace(lo, hi, CWT_VOICES) for _, lo, hi in BANDS])
    scales = MORLET_W0 * rate / (2.0 * np.pi * freqs)
    return freqs, scales


def _morlet_fft_bank(n_fft: int, scales: np.ndarray) -> np.ndarray:
    """Frequency-domain Morlet atoms (L2-normalized, analytic) on an n_fft grid.

    For scale s the atom's transform is sqrt(2 pi s) * pi^(-1/4) *
    exp(-(s w - w0)^2 / 2) evaluated at the FFT angular frequencies.
    """
    w = 2.0 * np.pi * np.fft.fftfreq(n_fft)  # rad/sample
    sw = scales[:, None] * w[None, :]
    bank = np.sqrt(2.0 * np.pi * scales[:, None]) * np.pi ** -0.25 \
        * np.exp(-0.5 * (sw - MORLET_W0) ** 2)
    bank[:, w < 0] = 0.0  # analytic wavelet: positive frequencies only
    return bank


def cwt_band_percentiles(x: np.ndarray, rate: float = TARGET_RATE_HZ) -> np.ndarray:
    """75th percentile of |CWT| per band, pooled over the band's scales and
    all time points. Morlet center-frequency parameter 6, 10 voices per band."""
    x2 = np.atleast_2d(np.asarray(x, dtype=np.float64))
    out = _cwt_block(x2, rate)
    return out[0] if x.ndim == 1 else out


def _cwt_block(x: np.ndarray, rate: float) -> np.ndarray:
    n_ep, n = x.shape
    _, scales = _cwt_scales(rate)
    out = np.empty((n_ep, len(BANDS)), dtype=np.float64)
    for bi in range(len(BANDS)):
        band_scales = scales[bi * CWT_VOICES:(bi + 1) * CWT_VOICES]
        # pad past the largest atom's support so circular wraparound is negligible
        support = int(np.ceil(5.0 * band_scales.max()))
        n_fft = spfft.next_fast_len(n + 2 * support)
        bank = _morlet_fft_bank(n_fft, band_scales)
        chunk = max(1, int(96 * 2 ** 20 / (n_fft * 16 * CWT_VOICES)))  # ~96 MB working set
        for a in range(0, n_ep, chunk):
            spec = spfft.fft(x[a:a + chunk], n=n_fft, axis=1, workers=-1)
            coef = spfft.ifft(spec[:, None, :] * bank[None, :, :], axis=2,
                              overwrite_x=True, workers=-1)
            mags = np.abs(coef[:, :, :n])
            out[a:a + chunk, bi] = np.percentile(mags.reshape(mags.shape[0], -1), 75, axis=1)
    return out


# ---------------------------------------------------------------------------
# Lempel-Ziv complexity
# ---------------------------------------------------------------------------

@njit(cache=True)
def _lz76_phrases(b: np.ndarray) -> int:
    """LZ76 distinct-phrase count of a binary sequence.

    Phrases are closed when a symbol cannot be copied from the history; a
    trailing reproducible run adds no phrase, so a constant sequence counts 1.
    """
    n = b.shape[0]
    c, l = 1, 1
    i, k, k_max = 0, 1, 1
    while l + k <= n:
        if b[i + k - 1] == b[l + k - 1]:
            k += 1
        else:
            if k > k_max:
                k_max = k
            i += 1
            if i == l:
                c += 1
                l += k_max
                i, k, k_max = 0, 1, 1
            else:
                k = 1
    return c


@njit(cache=True, parallel=True)
def _lz76_rows(b: np.ndarray) -> np.ndarray:
    out = np.empty(b.shape[0], dtype=np.int64)
    for r in prange(b.shape[0]):
        out[r] = _lz76_phrases(b[r])
    return out


def lempel_ziv(x: np.ndarray) -> float:
    """Normalized Lempel-Ziv complexity c(n) * log2(n) / n of the signal
    binarized at its median (value > median -> 1)."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least 2 samples")
    b = (x > np.median(x)).astype(np.uint8)
    return _lz76_phrases(b) * np.log2(n) / n


def _lz_block(x: np.ndarray) -> np.ndarray:
    med = np.median(x, axis=1)
    b = (x > med[:, None]).astype(np.uint8)
    n = x.shape[1]
    return _lz76_rows(b) * np.log2(n) / n


# ---------------------------------------------------------------------------
# full vector
# ---------------------------------------------------------------------------

def extract_all(samples: np.ndarray, rate: float = TARGET_RATE_HZ) -> np.ndarray:
    """All 26 registry features for one clean epoch, in FEATURE_NAMES order."""
    x = np.asarray(samples, dtype=np.float64)
    out = extract_matrix(x[None, :], rate)[0]
    if not np.isfinite(out).all():
        raise DegenerateEpoch("degenerate epoch: zero variance or zero in-band power")
    return out


def extract_matrix(epochs: np.ndarray, rate: float = TARGET_RATE_HZ) -> np.ndarray:
    """Feature matrix (n_epochs x 26) for a stack of epochs.

    Rows for degenerate epochs (zero variance / zero in-band power) contain
    NaN; callers drop them before training.
    """
    x = np.asarray(epochs, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("expected a 2-D stack of epochs")
    td = _time_domain_block(x)
    freqs, psd = welch_psd(x, rate)
    rel, ratios = _band_powers_block(freqs, psd)
    spec = _spectral_block(freqs, psd)
    drift = mean_freq_diff(x, rate)
    cwt = _cwt_block(x, rate)
    lz = _lz_block(x)
    out = np.column_stack([td, rel, ratios,
                           spec[:, 0], spec[:, 1], spec[:, 2], spec[:, 3], drift,
                           cwt, lz])
    # degenerate epochs poison every row-derived feature, not just some
    bad = ~np.isfinite(out).all(axis=1)
    out[bad] = np.nan
    return out
