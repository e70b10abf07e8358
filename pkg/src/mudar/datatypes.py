"""Core value types shared across the toolkit.

All containers are frozen dataclasses that validate their fields on
construction, so a value that exists is a value that is well-formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .validation import (
    as_float_array,
    check_finite,
    check_nonnegative,
    check_positive,
    check_positive_int,
    check_sorted_unique_ints,
    check_unit_interval,
)

MODALITIES = ("audio", "visual")
FEATURE_KINDS = ("motion", "rgb", "injected", "audio", "diff")


@dataclass(frozen=True)
class AudioClip:
    """Mono audio samples in [-1, 1] at a fixed sample rate."""

    samples: np.ndarray
    rate: int

    def __post_init__(self) -> None:
        samples = as_float_array(self.samples, "samples", ndim=1)
        check_finite(samples, "samples")
        if samples.size and np.abs(samples).max() > 1.0:
            raise InvalidInputError("samples must lie in [-1, 1]")
        check_positive_int(self.rate, "rate")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "rate", int(self.rate))

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.rate


@dataclass(frozen=True)
class Spectrogram:
    """Magnitude spectrogram, one row per analysis frame."""

    magnitudes: np.ndarray
    rate: int
    hop: int
    window_size: int

    def __post_init__(self) -> None:
        mags = as_float_array(self.magnitudes, "magnitudes", ndim=2)
        check_finite(mags, "magnitudes")
        if mags.size and mags.min() < 0:
            raise InvalidInputError("magnitudes must be non-negative")
        check_positive_int(self.rate, "rate")
        check_positive_int(self.hop, "hop")
        check_positive_int(self.window_size, "window_size")
        if mags.shape[1] != self.window_size // 2 + 1:
            raise InvalidInputError(
                f"expected {self.window_size // 2 + 1} frequency bins, got {mags.shape[1]}"
            )
        object.__setattr__(self, "magnitudes", mags)

    @property
    def n_frames(self) -> int:
        return self.magnitudes.shape[0]

    @property
    def n_bins(self) -> int:
        return self.magnitudes.shape[1]

    @property
    def frame_rate(self) -> float:
        return self.rate / self.hop

    @property
    def bin_hz(self) -> float:
        return self.rate / self.window_size


@dataclass(frozen=True)
class StftParams:
    """Analysis geometry for the short-time transform."""

    window_size: int = 2048
    hop: int = 512

    def __post_init__(self) -> None:
        check_positive_int(self.window_size, "window_size")
        check_positive_int(self.hop, "hop")
        if self.window_size < 2:
            raise InvalidInputError("window_size must be at least 2")


@dataclass(frozen=True)
class OnsetParams:
    """Flux reference construction: time lag and frequency smear width."""

    lag: int = 1
    max_filter_bins: int = 3

    def __post_init__(self) -> None:
        check_positive_int(self.lag, "lag")
        check_positive_int(self.max_filter_bins, "max_filter_bins")
        if self.max_filter_bins % 2 == 0:
            raise InvalidInputError(
                f"max_filter_bins must be odd, got {self.max_filter_bins}"
            )


@dataclass(frozen=True)
class PeakPickParams:
    """Gates for onset-style peak selection.

    ``delta=None`` selects the adaptive threshold 0.07 * max(signal).
    """

    pre_max: int = 1
    post_max: int = 1
    pre_avg: int = 3
    post_avg: int = 3
    delta: float | None = None
    wait: int = 2

    def __post_init__(self) -> None:
        for name in ("pre_max", "post_max", "pre_avg", "post_avg", "wait"):
            check_nonnegative(getattr(self, name), name)
        if self.delta is not None and self.delta < 0:
            raise InvalidInputError(f"delta must be >= 0, got {self.delta}")

    def kwargs(self) -> dict:
        return {
            "pre_max": self.pre_max,
            "post_max": self.post_max,
            "pre_avg": self.pre_avg,
            "post_avg": self.post_avg,
            "delta": self.delta,
            "wait": self.wait,
        }


@dataclass(frozen=True)
class OnsetEnvelope:
    """Non-negative per-frame onset strength."""

    values: np.ndarray
    frame_rate: float

    def __post_init__(self) -> None:
        values = as_float_array(self.values, "values", ndim=1)
        check_finite(values, "values")
        if values.size and values.min() < 0:
            raise InvalidInputError("envelope values must be non-negative")
        check_positive(self.frame_rate, "frame_rate")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "frame_rate", float(self.frame_rate))

    @property
    def n_frames(self) -> int:
        return self.values.size

    def times(self) -> np.ndarray:
        return np.arange(self.values.size) / self.frame_rate


@dataclass(frozen=True)
class TempoEstimate:
    """Estimated tempo with a normalised confidence."""

    bpm: float
    confidence: float

    def __post_init__(self) -> None:
        check_positive(self.bpm, "bpm")
        check_unit_interval(self.confidence, "confidence")
        object.__setattr__(self, "bpm", float(self.bpm))
        object.__setattr__(self, "confidence", float(self.confidence))

    @property
    def period_s(self) -> float:
        return 60.0 / self.bpm


@dataclass(frozen=True)
class RhythmTrack:
    """Sparse rhythm keypoints over a fixed-length frame grid."""

    keypoints: tuple[int, ...]
    fps: float
    length_frames: int
    modality: str = "audio"

    def __post_init__(self) -> None:
        kps = check_sorted_unique_ints(tuple(self.keypoints), "keypoints")
        check_positive(self.fps, "fps")
        check_positive_int(self.length_frames, "length_frames")
        if kps.size and (kps[0] < 0 or kps[-1] >= self.length_frames):
            raise InvalidInputError("keypoints must lie in [0, length_frames)")
        if self.modality not in MODALITIES:
            raise InvalidInputError(f"modality must be one of {MODALITIES}, got {self.modality!r}")
        object.__setattr__(self, "keypoints", tuple(int(k) for k in kps))
        object.__setattr__(self, "fps", float(self.fps))
        object.__setattr__(self, "length_frames", int(self.length_frames))

    @property
    def n_keypoints(self) -> int:
        return len(self.keypoints)

    def indicator(self) -> np.ndarray:
        """Binary per-frame activation, 1.0 exactly at keypoints."""
        out = np.zeros(self.length_frames, dtype=np.float64)
        if self.keypoints:
            out[list(self.keypoints)] = 1.0
        return out

    def times(self) -> np.ndarray:
        """Keypoint times in seconds."""
        return np.asarray(self.keypoints, dtype=np.float64) / self.fps

    def resampled(self, fps: float) -> "RhythmTrack":
        """The same rhythm re-indexed onto a different frame rate.

        Keypoint times are preserved and rounded to the nearest new frame;
        collisions collapse to one keypoint.
        """
        check_positive(fps, "fps")
        length = max(1, int(np.floor(self.length_frames / self.fps * fps + 0.5)))
        scaled = sorted(
            {
                min(length - 1, int(np.floor(k / self.fps * fps + 0.5)))
                for k in self.keypoints
            }
        )
        return RhythmTrack(
            keypoints=tuple(scaled),
            fps=fps,
            length_frames=length,
            modality=self.modality,
        )

    def to_dict(self) -> dict:
        return {
            "fps": self.fps,
            "length_frames": self.length_frames,
            "modality": self.modality,
            "keypoints": list(self.keypoints),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RhythmTrack":
        try:
            return cls(
                keypoints=tuple(data["keypoints"]),
                fps=data["fps"],
                length_frames=data["length_frames"],
                modality=data.get("modality", "audio"),
            )
        except KeyError as exc:
            raise InvalidInputError(f"rhythm track dict is missing key {exc}") from None


@dataclass(frozen=True)
class FeatureSeq:
    """Time-major feature matrix with a frame rate and a provenance kind."""

    data: np.ndarray
    fps: float
    kind: str

    def __post_init__(self) -> None:
        data = as_float_array(self.data, "data", ndim=2)
        check_finite(data, "data")
        if data.shape[0] < 1:
            raise InvalidInputError("feature sequence needs at least one row")
        check_positive(self.fps, "fps")
        if self.kind not in FEATURE_KINDS:
            raise InvalidInputError(
                f"kind must be one of {FEATURE_KINDS}, got {self.kind!r}"
            )
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "fps", float(self.fps))

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]
