"""Seeded synthetic audio-video corpus for desk-scale evaluation.

Each clip pairs a click track with a moving-dot video whose direction
reversals land on the clicks (optionally jittered by a few frames), plus
a ground-truth record of the event times. Byte-for-byte deterministic
given the spec.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datatypes import AudioClip
from .errors import InvalidInputError
from .fileio import write_frames_dir, write_json_file, write_wav
from .validation import (
    check_nonnegative_int,
    check_positive,
    check_positive_int,
)

MOTION_PATTERNS = ("bounce", "orbit")

_FRAME_SIZE = 64
_DOT_SIGMA = 2.5
_CLICK_HZ = 1000.0
_CLICK_SECONDS = 0.03


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for one synthetic audio-video clip."""

    clip_seconds: float = 8.0
    fps: float = 8.0
    sample_rate: int = 16000
    bpm: float = 120.0
    motion_pattern: str = "bounce"
    jitter_frames: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        check_positive(self.clip_seconds, "clip_seconds")
        check_positive(self.fps, "fps")
        check_positive_int(self.sample_rate, "sample_rate")
        check_positive(self.bpm, "bpm")
        if self.motion_pattern not in MOTION_PATTERNS:
            raise InvalidInputError(
                f"motion_pattern must be one of {MOTION_PATTERNS}, "
                f"got {self.motion_pattern!r}"
            )
        check_nonnegative_int(self.jitter_frames, "jitter_frames")

    @property
    def n_frames(self) -> int:
        return int(np.floor(self.clip_seconds * self.fps + 0.5))

    @property
    def n_samples(self) -> int:
        return int(np.floor(self.clip_seconds * self.sample_rate + 0.5))


@dataclass(frozen=True)
class SyntheticClip:
    """In-memory result: audio, grayscale frames, and the ground truth."""

    audio: AudioClip
    frames: np.ndarray
    truth: dict


def beat_times(spec: SyntheticSpec) -> np.ndarray:
    """Event times in seconds: every half-period plus a half-period lead-in,
    so no event sits on the clip boundary."""
    period = 60.0 / spec.bpm
    count = int(np.ceil(spec.clip_seconds / period - 0.5))
    return (np.arange(count) + 0.5) * period


def click_track(spec: SyntheticSpec) -> AudioClip:
    """Silence plus a short decaying sine burst at every beat time."""
    samples = np.zeros(spec.n_samples)
    tau = np.arange(int(_CLICK_SECONDS * spec.sample_rate)) / spec.sample_rate
    burst = 0.9 * np.sin(2.0 * np.pi * _CLICK_HZ * tau) * np.exp(-tau * 120.0)
    for t in beat_times(spec):
        start = int(np.floor(t * spec.sample_rate + 0.5))
        stop = min(start + burst.size, samples.size)
        if start < samples.size:
            samples[start:stop] += burst[: stop - start]
    return AudioClip(samples=np.clip(samples, -1.0, 1.0), rate=spec.sample_rate)


def _event_frames(spec: SyntheticSpec) -> np.ndarray:
    frames = np.floor(beat_times(spec) * spec.fps + 0.5).astype(np.int64)
    frames = np.unique(np.clip(frames, 1, spec.n_frames - 2))
    if frames.size == 0:
        raise InvalidInputError("clip too short to place any rhythm event")
    return frames


def _jittered_frames(event_frames: np.ndarray, spec: SyntheticSpec, rng) -> np.ndarray:
    if spec.jitter_frames == 0:
        return event_frames.copy()
    j = spec.jitter_frames
    moved = event_frames + rng.integers(-j, j + 1, size=event_frames.size)
    moved = np.clip(moved, 1, spec.n_frames - 2)
    for k in range(1, moved.size):
        moved[k] = max(moved[k], moved[k - 1] + 1)
    if moved[-1] > spec.n_frames - 2:
        raise InvalidInputError("jitter pushes events past the clip end")
    return moved


def _runs(reversals: np.ndarray, n_frames: int) -> np.ndarray:
    edges = np.concatenate([[0], reversals, [n_frames - 1]])
    return np.diff(edges)


def _triangle_wave(reversals: np.ndarray, n_frames: int) -> np.ndarray:
    """Piecewise-linear wave in [0, 1] whose direction flips exactly at the
    reversal frames.

    Anchoring the extrema (rather than integrating a velocity) keeps the
    trajectory bounded however unevenly the reversals are spaced; the lead-in
    and tail segments move at a typical-run rate so motion never stalls.
    """
    t_anchor = [int(r) for r in reversals]
    u_anchor = [1.0 if k % 2 == 0 else 0.0 for k in range(len(t_anchor))]
    typical = max(float(np.median(_runs(reversals, n_frames))), 1.0)
    head = min(1.0, t_anchor[0] / typical)
    t_anchor.insert(0, 0)
    u_anchor.insert(0, u_anchor[0] - head if u_anchor[0] > 0.5 else u_anchor[0] + head)
    if t_anchor[-1] < n_frames - 1:
        tail = min(1.0, (n_frames - 1 - t_anchor[-1]) / typical)
        u_anchor.append(u_anchor[-1] - tail if u_anchor[-1] > 0.5 else u_anchor[-1] + tail)
        t_anchor.append(n_frames - 1)
    return np.interp(np.arange(n_frames), t_anchor, u_anchor)


def _render_dot(ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    grid = np.arange(_FRAME_SIZE, dtype=np.float64)
    yy = grid[:, None]
    xx = grid[None, :]
    frames = np.empty((ys.size, _FRAME_SIZE, _FRAME_SIZE))
    for t, (y, x) in enumerate(zip(ys, xs)):
        frames[t] = np.exp(-((yy - y) ** 2 + (xx - x) ** 2) / (2.0 * _DOT_SIGMA**2))
    return frames


def _bounce_positions(reversals: np.ndarray, n_frames: int) -> tuple:
    # amplitude capped so no segment exceeds ~2.5 px/frame (flow-friendly)
    min_run = max(int(_runs(reversals, n_frames).min()), 1)
    amplitude = min(10.0, 1.25 * min_run)
    wave = _triangle_wave(reversals, n_frames)
    center = _FRAME_SIZE / 2.0
    return center + amplitude * (2.0 * wave - 1.0), np.full(n_frames, center)


def _orbit_positions(reversals: np.ndarray, n_frames: int) -> tuple:
    """Arc oscillation: the dot swings along a circle, turning back exactly
    at the reversal frames.

    The swing spans pi/9 so the travel direction never leaves one
    orientation-histogram bin between reversals; full revolutions would
    drag the direction across bin edges and fake extra rhythm events.
    """
    radius = 16.0
    swing = np.pi / 9.0
    phi = swing * (_triangle_wave(reversals, n_frames) - 0.5)
    center = _FRAME_SIZE / 2.0
    return center + radius * np.sin(phi), center + radius * np.cos(phi)


def dot_video(spec: SyntheticSpec, reversals: np.ndarray) -> np.ndarray:
    """Gaussian dot whose travel direction flips exactly at the given frames."""
    if spec.motion_pattern == "bounce":
        ys, xs = _bounce_positions(reversals, spec.n_frames)
    else:
        ys, xs = _orbit_positions(reversals, spec.n_frames)
    return _render_dot(ys, xs)


def synthesize(spec: SyntheticSpec) -> SyntheticClip:
    """Build one clip in memory: click audio, dot video, ground truth."""
    if spec.n_frames < 3:
        raise InvalidInputError("clip must span at least 3 video frames")
    rng = np.random.default_rng(spec.seed)
    audio_frames = _event_frames(spec)
    visual_frames = _jittered_frames(audio_frames, spec, rng)
    truth = {
        "clip_seconds": spec.clip_seconds,
        "fps": spec.fps,
        "sample_rate": spec.sample_rate,
        "bpm": spec.bpm,
        "motion_pattern": spec.motion_pattern,
        "jitter_frames": spec.jitter_frames,
        "seed": spec.seed,
        "n_frames": spec.n_frames,
        "beat_times_s": [float(t) for t in beat_times(spec)],
        "audio_keypoints": [int(f) for f in audio_frames],
        "visual_keypoints": [int(f) for f in visual_frames],
    }
    return SyntheticClip(
        audio=click_track(spec),
        frames=dot_video(spec, visual_frames),
        truth=truth,
    )


def gen_synthetic(spec: SyntheticSpec, out_dir) -> dict:
    """Write audio.wav, frames/, and truth.json under out_dir; returns paths."""
    clip = synthesize(spec)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    wav_path = out_dir / "audio.wav"
    frames_dir = out_dir / "frames"
    truth_path = out_dir / "truth.json"
    write_wav(wav_path, clip.audio)
    write_frames_dir(frames_dir, clip.frames)
    write_json_file(truth_path, clip.truth)
    return {
        "audio": str(wav_path),
        "frames_dir": str(frames_dir),
        "truth": str(truth_path),
    }
