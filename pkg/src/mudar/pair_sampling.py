"""Sampling of audio-visual training pairs with rhythm-aware gates.

Cross-clip negatives are admitted only when the two clips' keypoint
indicator sequences disagree on more frames than alpha*T, which filters
false negatives whose rhythms coincide by chance. Temporal shifts for
sync/async pairs exclude multiples of the half-beat so that a shifted clip
cannot re-align with its own beat grid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .datatypes import RhythmTrack, TempoEstimate
from .errors import (
    FormatError,
    InvalidInputError,
    NoValidNegativeError,
    NoValidShiftError,
)
from .validation import check_nonnegative_int, check_positive, check_unit_interval

TASKS = ("avc", "avts")
LABELS = ("pos", "neg", "sync", "async")


@dataclass(frozen=True)
class SamplingParams:
    """Gate threshold, admissible shift window, and generator seed."""

    alpha: float = 0.1
    shift_range: tuple[int, int] = (1, 8)
    seed: int = 0

    def __post_init__(self) -> None:
        check_unit_interval(self.alpha, "alpha")
        lo, hi = self.shift_range
        if lo < 1:
            raise InvalidInputError(f"shift_range minimum must be >= 1, got {lo}")
        if hi < lo:
            raise InvalidInputError(f"shift_range {self.shift_range} is empty")
        object.__setattr__(self, "shift_range", (int(lo), int(hi)))


@dataclass(frozen=True)
class PairSample:
    """One manifest row: which audio goes with which visual clip, and how."""

    visual_id: object
    audio_id: object
    shift_frames: int
    task: str
    label: str

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise InvalidInputError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.label not in LABELS:
            raise InvalidInputError(f"label must be one of {LABELS}, got {self.label!r}")
        if self.task == "avc":
            if self.label not in ("pos", "neg"):
                raise InvalidInputError("avc samples are labelled pos or neg")
            if self.shift_frames != 0:
                raise InvalidInputError("avc samples carry no temporal shift")
            if self.label == "neg" and self.audio_id == self.visual_id:
                raise InvalidInputError("a negative pair needs a different audio clip")
            if self.label == "pos" and self.audio_id != self.visual_id:
                raise InvalidInputError("a positive pair keeps its own audio")
        else:
            if self.label not in ("sync", "async"):
                raise InvalidInputError("avts samples are labelled sync or async")
            if self.audio_id != self.visual_id:
                raise InvalidInputError("avts samples re-align a clip with itself")
            if self.label == "sync" and self.shift_frames != 0:
                raise InvalidInputError("sync samples have shift 0")
            if self.label == "async" and self.shift_frames < 1:
                raise InvalidInputError("async samples need a shift of at least 1 frame")
        object.__setattr__(self, "shift_frames", int(self.shift_frames))

    def to_dict(self) -> dict:
        return {
            "visual": self.visual_id,
            "audio": self.audio_id,
            "shift": self.shift_frames,
            "task": self.task,
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PairSample":
        try:
            return cls(
                visual_id=d["visual"],
                audio_id=d["audio"],
                shift_frames=int(d["shift"]),
                task=d["task"],
                label=d["label"],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed pair record: {exc}") from None


def rhythm_similarity_score(pos: RhythmTrack, neg: RhythmTrack) -> tuple[int, int]:
    """Count frames where exactly one track has a keypoint, plus the length.

    The caller turns (mismatch_count, T) into a gate score mismatch - alpha*T.
    """
    if pos.length_frames != neg.length_frames:
        raise InvalidInputError(
            f"track lengths differ: {pos.length_frames} vs {neg.length_frames}"
        )
    if pos.fps != neg.fps:
        raise InvalidInputError(f"frame rates differ: {pos.fps} vs {neg.fps}")
    mismatch = int(np.abs(pos.indicator() - neg.indicator()).sum())
    return mismatch, pos.length_frames


def admit_negative(pos: RhythmTrack, neg: RhythmTrack, params: SamplingParams) -> bool:
    """True when the candidate's rhythm differs enough to be a safe negative."""
    mismatch, t = rhythm_similarity_score(pos, neg)
    return mismatch - params.alpha * t > 0


def beat_unit_frames(fps: float, tempo: TempoEstimate) -> int:
    """Half-beat length in frames, rounded half-up to the nearest integer."""
    check_positive(fps, "fps")
    check_positive(tempo.bpm, "tempo.bpm")
    return int(np.floor(fps * (60.0 / tempo.bpm) / 2.0 + 0.5))


def valid_shifts(
    t: int,
    fps: float,
    tempo: TempoEstimate,
    shift_range: tuple[int, int],
) -> tuple[set[int], bool]:
    """Shifts in the range that do not fall on a half-beat multiple.

    Returns (shifts, vacuous). When the half-beat rounds to 0 or 1 frame the
    modular condition excludes nothing meaningful (every integer is a
    multiple of 1), so the whole range comes back with vacuous=True.
    """
    lo, hi = int(shift_range[0]), int(shift_range[1])
    if lo < 1 or hi > t - 1 or lo > hi:
        raise InvalidInputError(
            f"shift range [{lo}, {hi}] must lie within [1, {t - 1}]"
        )
    unit = beat_unit_frames(fps, tempo)
    if unit <= 1:
        return set(range(lo, hi + 1)), True
    shifts = {f for f in range(lo, hi + 1) if f % unit != 0}
    if not shifts:
        raise NoValidShiftError(
            f"every shift in [{lo}, {hi}] is a multiple of the {unit}-frame half-beat"
        )
    return shifts, False


def _normalize_collection(clips) -> tuple[list, dict]:
    if hasattr(clips, "items"):
        ids = list(clips.keys())
        table = dict(clips)
    else:
        ids = list(range(len(clips)))
        table = {i: clip for i, clip in enumerate(clips)}
    return ids, table


def make_avc_pair(
    clips,
    visual_id,
    params: SamplingParams,
    positive: bool = False,
) -> PairSample:
    """Draw one correspondence pair for the given visual clip.

    Positives keep their own audio. For a negative, candidates are visited
    in one seeded random order and the first to pass the mismatch gate is
    taken; exhausting the collection raises.
    """
    ids, table = _normalize_collection(clips)
    if visual_id not in table:
        raise InvalidInputError(f"visual_id {visual_id!r} is not in the collection")
    if positive:
        return PairSample(visual_id, visual_id, 0, "avc", "pos")
    if len(ids) < 2:
        raise InvalidInputError("need at least 2 clips to draw a negative")
    candidates = [i for i in ids if i != visual_id]
    rng = np.random.default_rng(params.seed)
    for j in rng.permutation(len(candidates)):
        cand = candidates[int(j)]
        if admit_negative(table[visual_id], table[cand], params):
            return PairSample(visual_id, cand, 0, "avc", "neg")
    raise NoValidNegativeError(
        f"no candidate rhythm differs from clip {visual_id!r} by more than "
        f"alpha*T = {params.alpha} * {table[visual_id].length_frames}"
    )


def make_avts_pair(
    clip_track: RhythmTrack,
    fps: float,
    tempo: TempoEstimate,
    params: SamplingParams,
    *,
    clip_id=0,
    sync: bool = False,
) -> PairSample:
    """Draw one synchronisation pair for a clip against itself.

    Sync samples keep shift 0; async samples draw uniformly (seeded) from
    the shifts that survive the half-beat exclusion.
    """
    if sync:
        return PairSample(clip_id, clip_id, 0, "avts", "sync")
    shifts, _ = valid_shifts(clip_track.length_frames, fps, tempo, params.shift_range)
    ordered = sorted(shifts)
    rng = np.random.default_rng(params.seed)
    return PairSample(
        clip_id, clip_id, ordered[int(rng.integers(len(ordered)))], "avts", "async"
    )


def curriculum_task(epoch: int, switch_epoch: int = 35) -> str:
    """Correspondence first, synchronisation from switch_epoch onwards."""
    check_nonnegative_int(epoch, "epoch")
    check_nonnegative_int(switch_epoch, "switch_epoch")
    return "avc" if epoch < switch_epoch else "avts"


def pair_manifest_dumps(samples) -> str:
    """One compact JSON object per line, trailing newline included."""
    return "".join(json.dumps(s.to_dict(), sort_keys=True) + "\n" for s in samples)


def pair_manifest_loads(text: str) -> list[PairSample]:
    """Inverse of pair_manifest_dumps; bad lines raise a format error."""
    samples = []
    for ln, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"line {ln} is not valid JSON: {exc}") from None
        samples.append(PairSample.from_dict(record))
    return samples
