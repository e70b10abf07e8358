"""Musical rhythm extraction from audio.

The pipeline is: short-time Fourier magnitudes, positive spectral flux
against a frequency-smeared reference frame (onset envelope), peak picking
with local-max, local-mean, and spacing gates, and autocorrelation tempo
estimation with a log-normal lag prior.

Peak picking is deliberately generic over 1-D activation signals so the
visual rhythm pipeline can reuse it unchanged.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import maximum_filter1d

from .datatypes import (
    AudioClip,
    OnsetEnvelope,
    OnsetParams,
    PeakPickParams,
    RhythmTrack,
    Spectrogram,
    StftParams,
    TempoEstimate,
)
from .errors import InputTooShortError, InvalidInputError
from .validation import (
    as_float_array,
    check_finite,
    check_nonnegative_int,
    check_positive_int,
)


def stft(clip: AudioClip, window_size: int = 2048, hop: int = 512) -> Spectrogram:
    """Hamming-windowed magnitude STFT with centered frames.

    The signal is reflection-padded by half a window on both sides so frame n
    is centered on sample ``n * hop`` of the original signal. Frame count is
    ``1 + (padded_length - window_size) // hop``.
    """
    check_positive_int(window_size, "window_size")
    check_positive_int(hop, "hop")
    if window_size < 2:
        raise InvalidInputError("window_size must be at least 2")
    samples = clip.samples
    if samples.size < window_size:
        raise InputTooShortError(
            f"clip has {samples.size} samples, need at least window_size={window_size}"
        )
    pad = window_size // 2
    padded = np.pad(samples, pad, mode="reflect")
    n_frames = 1 + (padded.size - window_size) // hop
    starts = hop * np.arange(n_frames)[:, None]
    frames = padded[starts + np.arange(window_size)[None, :]]
    window = np.hamming(window_size)
    mags = np.abs(np.fft.rfft(frames * window, axis=1))
    return Spectrogram(magnitudes=mags, rate=clip.rate, hop=hop, window_size=window_size)


def onset_envelope(
    spec: Spectrogram, max_filter_bins: int = 3, lag: int = 1
) -> OnsetEnvelope:
    """Positive spectral flux against a frequency max-filtered reference.

    For each frame n the reference is frame ``n - lag`` run through a width
    ``max_filter_bins`` maximum filter along frequency (window clipped at the
    bin edges); only positive magnitude increases are summed. Frames with no
    reference (``n < lag``) get value 0.
    """
    check_positive_int(max_filter_bins, "max_filter_bins")
    if max_filter_bins % 2 == 0:
        raise InvalidInputError(f"max_filter_bins must be odd, got {max_filter_bins}")
    check_positive_int(lag, "lag")
    mags = spec.magnitudes
    reference = maximum_filter1d(mags, size=max_filter_bins, axis=1, mode="reflect")
    values = np.zeros(mags.shape[0], dtype=np.float64)
    if mags.shape[0] > lag:
        diff = mags[lag:] - reference[:-lag]
        values[lag:] = np.maximum(diff, 0.0).sum(axis=1)
    return OnsetEnvelope(values=values, frame_rate=spec.frame_rate)


def pick_peaks(
    values,
    pre_max: int = 1,
    post_max: int = 1,
    pre_avg: int = 3,
    post_avg: int = 3,
    delta: float | None = None,
    wait: int = 2,
) -> np.ndarray:
    """Select activation peaks by local-max, local-mean, and spacing gates.

    Index n is a peak when it attains the maximum of ``values[n-pre_max :
    n+post_max]`` (window clipped to the signal), exceeds the mean of
    ``values[n-pre_avg : n+post_avg]`` by at least ``delta``, and lies at
    least ``wait`` indices after the previously accepted peak. A rejected
    index does not advance the spacing gate. ``delta=None`` defaults to
    ``0.07 * max(values)``; under that adaptive threshold an identically zero
    signal has no peaks (silence carries no onsets).
    """
    if isinstance(values, OnsetEnvelope):
        values = values.values
    v = as_float_array(values, "values", ndim=1)
    check_finite(v, "values")
    for name, val in (("pre_max", pre_max), ("post_max", post_max),
                      ("pre_avg", pre_avg), ("post_avg", post_avg)):
        if val < 0:
            raise InvalidInputError(f"{name} must be >= 0, got {val}")
    wait = check_nonnegative_int(wait, "wait")
    if delta is None:
        peak = v.max() if v.size else 0.0
        if peak <= 0.0:
            return np.asarray([], dtype=np.int64)
        delta = 0.07 * peak
    if delta < 0:
        raise InvalidInputError(f"delta must be >= 0, got {delta}")

    peaks: list[int] = []
    prev = None
    for n in range(v.size):
        window_max = v[max(0, n - pre_max) : min(v.size, n + post_max + 1)].max()
        if v[n] < window_max:
            continue
        window_mean = v[max(0, n - pre_avg) : min(v.size, n + post_avg + 1)].mean()
        if v[n] < window_mean + delta:
            continue
        if prev is not None and n - prev < wait:
            continue
        peaks.append(n)
        prev = n
    return np.asarray(peaks, dtype=np.int64)


def estimate_tempo(
    envelope: OnsetEnvelope, bpm_range: tuple[float, float] = (60.0, 240.0)
) -> TempoEstimate:
    """Estimate tempo from envelope autocorrelation.

    Candidate lags spanning ``bpm_range`` are scored by the non-negative
    autocorrelation of the mean-centered envelope, weighted by a log-normal
    prior (one octave standard deviation) centered on the geometric mean of
    the range; the winning lag is refined by parabolic interpolation. The
    envelope must cover at least two periods of the slowest candidate tempo.
    Confidence is the normalised autocorrelation at the winning lag. A flat
    envelope carries no periodicity: the range midpoint is reported with
    confidence 0.
    """
    bpm_min, bpm_max = float(bpm_range[0]), float(bpm_range[1])
    if not 0 < bpm_min < bpm_max:
        raise InvalidInputError(f"bpm_range must satisfy 0 < min < max, got {bpm_range}")
    v = envelope.values
    fr = envelope.frame_rate
    slowest_lag = fr * 60.0 / bpm_min
    if v.size < 2 * slowest_lag:
        raise InputTooShortError(
            f"envelope has {v.size} frames, need at least {int(np.ceil(2 * slowest_lag))} "
            f"to resolve {bpm_min} bpm"
        )
    centered = v - v.mean()
    r = np.correlate(centered, centered, mode="full")[v.size - 1 :]
    if r[0] <= 0.0:
        return TempoEstimate(bpm=0.5 * (bpm_min + bpm_max), confidence=0.0)

    lag_lo = max(1, int(np.ceil(fr * 60.0 / bpm_max)))
    lag_hi = min(v.size - 1, int(np.floor(slowest_lag)))
    if lag_hi < lag_lo:
        raise InvalidInputError(f"bpm_range {bpm_range} leaves no valid lag at {fr} fps")
    lags = np.arange(lag_lo, lag_hi + 1)
    center_lag = fr * 60.0 / np.sqrt(bpm_min * bpm_max)
    prior = np.exp(-0.5 * np.log2(lags / center_lag) ** 2)
    score = np.maximum(r[lag_lo : lag_hi + 1], 0.0) * prior

    best = int(np.argmax(score))
    lag = float(lags[best])
    if 0 < best < score.size - 1:
        curvature = score[best - 1] - 2.0 * score[best] + score[best + 1]
        if curvature < 0:
            lag += float(np.clip(0.5 * (score[best - 1] - score[best + 1]) / curvature, -0.5, 0.5))
    bpm = float(np.clip(fr * 60.0 / lag, bpm_min, bpm_max))
    confidence = float(np.clip(r[lags[best]] / r[0], 0.0, 1.0))
    return TempoEstimate(bpm=bpm, confidence=confidence)


def music_rhythm(
    clip: AudioClip,
    stft_params: StftParams | None = None,
    onset_params: OnsetParams | None = None,
    pick_params: PeakPickParams | None = None,
    bpm_range: tuple[float, float] = (60.0, 240.0),
) -> tuple[OnsetEnvelope, RhythmTrack, TempoEstimate]:
    """Full audio pipeline: envelope, keypoints on the envelope grid, tempo."""
    sp = stft_params or StftParams()
    op = onset_params or OnsetParams()
    pp = pick_params or PeakPickParams()
    spec = stft(clip, window_size=sp.window_size, hop=sp.hop)
    env = onset_envelope(spec, max_filter_bins=op.max_filter_bins, lag=op.lag)
    peaks = pick_peaks(env, **pp.kwargs())
    track = RhythmTrack(
        keypoints=tuple(int(p) for p in peaks),
        fps=env.frame_rate,
        length_frames=env.n_frames,
        modality="audio",
    )
    return env, track, estimate_tempo(env, bpm_range=bpm_range)
