"""Retiming plans that align a dance clip's rhythm to a music clip's.

Three alignment modes produce the same executable artifact, a RetargetPlan
mapping every output frame to a (fractional) source frame: a rigid shift, a
piecewise-linear acceleration between matched keypoints, and dynamic time
warping over keypoint times. Retrieval scoring combines keypoint-matching
F1 with an externally supplied embedding similarity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .datatypes import RhythmTrack
from .errors import (
    EmptyTrackError,
    FormatError,
    InsufficientRhythmError,
    InvalidInputError,
    InvalidPathError,
)
from .validation import (
    as_float_array,
    check_finite,
    check_frame_stack,
    check_nonnegative,
    check_positive,
    check_positive_int,
    check_unit_interval,
)

PLAN_MODES = ("shift", "accelerate", "dtw")


@dataclass(frozen=True)
class WarpPath:
    """Monotonic DTW path over 1-based keypoint indices, with its cost."""

    pairs: tuple
    total_cost: float

    def __post_init__(self) -> None:
        pairs = tuple((int(i), int(j)) for i, j in self.pairs)
        if not pairs:
            raise InvalidPathError("a warp path needs at least one pair")
        if pairs[0] != (1, 1):
            raise InvalidPathError(f"path must start at (1, 1), got {pairs[0]}")
        for (i0, j0), (i1, j1) in zip(pairs, pairs[1:]):
            if (i1 - i0, j1 - j0) not in ((1, 1), (1, 0), (0, 1)):
                raise InvalidPathError(
                    f"illegal step from ({i0}, {j0}) to ({i1}, {j1})"
                )
        if not np.isfinite(self.total_cost) or self.total_cost < 0:
            raise InvalidPathError(f"total_cost must be finite and >= 0, got {self.total_cost}")
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "total_cost", float(self.total_cost))

    def to_dict(self) -> dict:
        return {"cost": self.total_cost, "pairs": [list(p) for p in self.pairs]}

    @classmethod
    def from_dict(cls, d: dict) -> "WarpPath":
        try:
            return cls(
                pairs=tuple((int(i), int(j)) for i, j in d["pairs"]),
                total_cost=float(d["cost"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed warp path record: {exc}") from None


@dataclass(frozen=True)
class RetargetPlan:
    """Executable frame remap: target frame t shows source frame map[t].

    Fractional source times mean interpolation between the straddling
    frames; skipped integers mean removal. audio_offset_s is where audio
    playback starts within the (longer) audio clip.
    """

    mode: str
    frame_map: tuple
    audio_offset_s: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.mode not in PLAN_MODES:
            raise InvalidInputError(f"mode must be one of {PLAN_MODES}, got {self.mode!r}")
        check_nonnegative(self.audio_offset_s, "audio_offset_s")
        fmap = tuple((int(t), float(s)) for t, s in self.frame_map)
        if not fmap:
            raise InvalidInputError("frame_map cannot be empty")
        if fmap[0][0] != 0:
            raise InvalidInputError(f"frame_map must start at target 0, got {fmap[0][0]}")
        targets = np.array([t for t, _ in fmap])
        sources = np.array([s for _, s in fmap])
        if np.any(np.diff(targets) <= 0):
            raise InvalidInputError("target frames must be strictly increasing")
        if np.any(np.diff(sources) < 0):
            raise InvalidInputError("source times must be non-decreasing")
        if not np.all(np.isfinite(sources)):
            raise InvalidInputError("source times must be finite")
        if sources[0] < 0:
            raise InvalidInputError("source times must be >= 0")
        limit = self.meta.get("source_length") if isinstance(self.meta, dict) else None
        if limit is not None and sources[-1] > limit - 1:
            raise InvalidInputError(
                f"source time {sources[-1]} exceeds the {limit}-frame source clip"
            )
        object.__setattr__(self, "frame_map", fmap)
        object.__setattr__(self, "audio_offset_s", float(self.audio_offset_s))

    @property
    def n_frames(self) -> int:
        return len(self.frame_map)

    def source_times(self) -> np.ndarray:
        return np.array([s for _, s in self.frame_map])

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "audio_offset_s": self.audio_offset_s,
            "frame_map": [{"target": t, "source": s} for t, s in self.frame_map],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RetargetPlan":
        try:
            return cls(
                mode=d["mode"],
                frame_map=tuple((e["target"], e["source"]) for e in d["frame_map"]),
                audio_offset_s=float(d["audio_offset_s"]),
                meta=dict(d.get("meta", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed plan record: {exc}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RetargetPlan":
        try:
            record = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"plan is not valid JSON: {exc}") from None
        return cls.from_dict(record)


@dataclass(frozen=True)
class RetrievalParams:
    """Weights and limits for hybrid music-to-dance retrieval."""

    lambda3: float = 0.5
    match_tolerance: int = 2
    top_k: int = 5

    def __post_init__(self) -> None:
        check_unit_interval(self.lambda3, "lambda3")
        check_nonnegative(self.match_tolerance, "match_tolerance")
        check_positive_int(self.top_k, "top_k")


def _require_keypoints(track: RhythmTrack, name: str) -> None:
    if track.n_keypoints == 0:
        raise EmptyTrackError(f"{name} has no keypoints")


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def shift_align(a: RhythmTrack, v: RhythmTrack) -> RetargetPlan:
    """Rigid alignment: crop the longer clip, then shift so the first
    keypoints of the cropped pair coincide. Pacing is untouched.

    The window (of the shorter clip's duration) slides over the longer
    clip; the position whose keypoint count is closest to the shorter
    clip's wins, earliest position on ties.
    """
    _require_keypoints(a, "audio track")
    _require_keypoints(v, "visual track")
    dur_a = a.length_frames / a.fps
    dur_v = v.length_frames / v.fps
    audio_longer = dur_a >= dur_v

    longer, shorter = (a, v) if audio_longer else (v, a)
    window = min(
        _round_half_up(min(dur_a, dur_v) * longer.fps), longer.length_frames
    )
    kp = np.asarray(longer.keypoints)
    best_offset, best_closeness = 0, None
    for o in range(longer.length_frames - window + 1):
        count = int(np.count_nonzero((kp >= o) & (kp < o + window)))
        closeness = abs(count - shorter.n_keypoints)
        if best_closeness is None or closeness < best_closeness:
            best_offset, best_closeness = o, closeness

    if audio_longer:
        audio_offset_s = best_offset / a.fps
        in_crop = [k for k in a.keypoints if best_offset <= k < best_offset + window]
        first_audio_rel_s = ((in_crop[0] if in_crop else a.keypoints[0]) - best_offset) / a.fps
        first_visual = v.keypoints[0]
        n_out = v.length_frames
    else:
        audio_offset_s = 0.0
        in_crop = [k for k in v.keypoints if best_offset <= k < best_offset + window]
        first_audio_rel_s = a.keypoints[0] / a.fps
        first_visual = in_crop[0] if in_crop else v.keypoints[0]
        n_out = window

    shift = first_visual - _round_half_up(first_audio_rel_s * v.fps)
    sources = np.clip(np.arange(n_out) + shift, 0, v.length_frames - 1)
    n_match = min(a.n_keypoints, v.n_keypoints)
    return RetargetPlan(
        mode="shift",
        frame_map=tuple((t, float(s)) for t, s in enumerate(sources)),
        audio_offset_s=audio_offset_s,
        meta={
            "source_shift_frames": int(shift),
            "window_offset_frames": int(best_offset),
            "source_length": v.length_frames,
            "target_fps": v.fps,
            "matched_keypoints": [[k, k] for k in range(n_match)],
        },
    )


def _anchored_plan(
    mode: str,
    anchors: list[tuple[int, float]],
    matched: list[list[int]],
    n_out: int,
    source_length: int,
    target_fps: float,
    extra_meta: dict | None = None,
) -> RetargetPlan:
    """Piecewise-linear plan through (target, source) anchors + endpoints."""
    points: dict[int, float] = {}
    for t, s in anchors:
        t = min(max(int(t), 0), n_out - 1)
        if t not in points:
            points[t] = float(s)
    points.setdefault(0, 0.0)
    points.setdefault(n_out - 1, float(source_length - 1))
    targets = np.array(sorted(points))
    sources = np.array([points[t] for t in targets])
    # A late anchor may sit below an earlier one after endpoint insertion;
    # clamp to keep the map monotone.
    sources = np.maximum.accumulate(sources)
    grid = np.interp(np.arange(n_out), targets, sources)
    meta = {
        "anchors": [[int(t), float(s)] for t, s in zip(targets, sources)],
        "matched_keypoints": matched,
        "source_length": source_length,
        "target_fps": target_fps,
    }
    meta.update(extra_meta or {})
    return RetargetPlan(
        mode=mode,
        frame_map=tuple((t, float(s)) for t, s in enumerate(grid)),
        audio_offset_s=0.0,
        meta=meta,
    )


def accelerate_align(a: RhythmTrack, v: RhythmTrack) -> RetargetPlan:
    """Segmentwise retiming: the k-th visual inter-keypoint interval is
    linearly stretched or compressed to the k-th audio interval.

    Unequal keypoint counts are handled by truncating the longer list; the
    number of dropped keypoints lands in the plan metadata.
    """
    if a.n_keypoints < 2:
        raise InsufficientRhythmError(
            f"audio track has {a.n_keypoints} keypoints, acceleration needs 2"
        )
    if v.n_keypoints < 2:
        raise InsufficientRhythmError(
            f"visual track has {v.n_keypoints} keypoints, acceleration needs 2"
        )
    n = min(a.n_keypoints, v.n_keypoints)
    n_out = max(_round_half_up(a.length_frames / a.fps * v.fps), 1)
    anchors = [
        (_round_half_up(a.keypoints[k] / a.fps * v.fps), float(v.keypoints[k]))
        for k in range(n)
    ]
    return _anchored_plan(
        "accelerate",
        anchors,
        matched=[[k, k] for k in range(n)],
        n_out=n_out,
        source_length=v.length_frames,
        target_fps=v.fps,
        extra_meta={"truncated_keypoints": a.n_keypoints + v.n_keypoints - 2 * n},
    )


def dtw_align(a: RhythmTrack, v: RhythmTrack) -> WarpPath:
    """Optimal monotonic matching of keypoint times (in seconds).

    c(i,j) = |t_i - t_j| + min(c(i-1,j-1), c(i-1,j), c(i,j-1)); backtracking
    prefers diagonal, then vertical, then horizontal steps on ties.
    """
    _require_keypoints(a, "audio track")
    _require_keypoints(v, "visual track")
    ta = a.times()
    tv = v.times()
    d = np.abs(ta[:, None] - tv[None, :])
    n, m = d.shape
    c = np.empty((n, m))
    c[0, 0] = d[0, 0]
    for j in range(1, m):
        c[0, j] = c[0, j - 1] + d[0, j]
    for i in range(1, n):
        c[i, 0] = c[i - 1, 0] + d[i, 0]
        for j in range(1, m):
            c[i, j] = d[i, j] + min(c[i - 1, j - 1], c[i - 1, j], c[i, j - 1])

    pairs = [(n, m)]
    i, j = n - 1, m - 1
    while (i, j) != (0, 0):
        candidates = []
        if i > 0 and j > 0:
            candidates.append((c[i - 1, j - 1], 0, (i - 1, j - 1)))
        if i > 0:
            candidates.append((c[i - 1, j], 1, (i - 1, j)))
        if j > 0:
            candidates.append((c[i, j - 1], 2, (i, j - 1)))
        _, _, (i, j) = min(candidates)
        pairs.append((i + 1, j + 1))
    pairs.reverse()
    return WarpPath(pairs=tuple(pairs), total_cost=float(c[n - 1, m - 1]))


def _collapse_path(path: WarpPath, d: np.ndarray) -> list[tuple[int, int]]:
    """Reduce plateau runs to one-to-one matches, keeping each index's
    cheapest partner (0-based output)."""
    best_for_i: dict[int, int] = {}
    for i1, j1 in path.pairs:
        i, j = i1 - 1, j1 - 1
        if i not in best_for_i or d[i, j] < d[i, best_for_i[i]]:
            best_for_i[i] = j
    best_for_j: dict[int, int] = {}
    for i, j in best_for_i.items():
        if j not in best_for_j or d[i, j] < d[best_for_j[j], j]:
            best_for_j[j] = i
    return sorted((i, j) for j, i in best_for_j.items())


def plan_from_path(path: WarpPath, a: RhythmTrack, v: RhythmTrack, fps: float) -> RetargetPlan:
    """Turn a warp path into an executable plan at the given output rate.

    Matched keypoints become (target, source) anchors; between anchors the
    source advances linearly, and clip endpoints are pinned unless an
    anchor already occupies them.
    """
    check_positive(fps, "fps")
    _require_keypoints(a, "audio track")
    _require_keypoints(v, "visual track")
    n, m = a.n_keypoints, v.n_keypoints
    if path.pairs[-1] != (n, m):
        raise InvalidPathError(
            f"path ends at {path.pairs[-1]}, tracks need ({n}, {m})"
        )
    ta = a.times()
    tv = v.times()
    d = np.abs(ta[:, None] - tv[None, :])
    matched = _collapse_path(path, d)
    n_out = max(_round_half_up(a.length_frames / a.fps * fps), 1)
    anchors = [
        (_round_half_up(ta[i] * fps), float(v.keypoints[j])) for i, j in matched
    ]
    return _anchored_plan(
        "dtw",
        anchors,
        matched=[[i, j] for i, j in matched],
        n_out=n_out,
        source_length=v.length_frames,
        target_fps=fps,
        extra_meta={"path_cost": path.total_cost},
    )


def apply_plan(frames, plan: RetargetPlan, nearest: bool = False) -> np.ndarray:
    """Materialise a plan: resample the source frames onto the target grid.

    Fractional sources blend the two straddling frames linearly; with
    nearest=True they snap to the closer one instead.
    """
    arr = check_frame_stack(frames)
    targets = [t for t, _ in plan.frame_map]
    if targets != list(range(plan.n_frames)):
        raise InvalidInputError("plan frame map must cover every target frame")
    last = arr.shape[0] - 1
    sources = plan.source_times()
    if sources[-1] > last:
        raise InvalidInputError(
            f"plan addresses source frame {sources[-1]}, clip ends at {last}"
        )
    out = np.empty((plan.n_frames,) + arr.shape[1:], dtype=np.float64)
    for t, s in enumerate(sources):
        if nearest:
            out[t] = arr[min(int(np.floor(s + 0.5)), last)]
        else:
            lo = int(np.floor(s))
            hi = min(lo + 1, last)
            frac = s - lo
            out[t] = (1.0 - frac) * arr[lo] + frac * arr[hi]
    return out


def plan_alignment_error(plan: RetargetPlan, a: RhythmTrack, v: RhythmTrack) -> float:
    """Mean |remapped visual keypoint - matched audio keypoint| in target frames.

    Keypoint correspondences come from the plan's metadata (falling back to
    index pairing); the remapped position of a visual keypoint is found by
    inverting the frame map.
    """
    matched = plan.meta.get("matched_keypoints")
    if not matched:
        matched = [[k, k] for k in range(min(a.n_keypoints, v.n_keypoints))]
    if not matched:
        raise EmptyTrackError("no keypoint correspondences to score")
    fps = float(plan.meta.get("target_fps", v.fps))
    sources = plan.source_times()
    targets = np.arange(plan.n_frames, dtype=np.float64)
    # keep the first target of each source plateau so the inverse is a function
    keep = np.concatenate([[True], np.diff(sources) > 0])
    inv_x, inv_y = sources[keep], targets[keep]
    errors = []
    for ai, vj in matched:
        remapped = float(np.interp(v.keypoints[vj], inv_x, inv_y))
        want = a.keypoints[ai] / a.fps * fps
        errors.append(abs(remapped - want))
    return float(np.mean(errors))


def rhythm_match_f1(a_keypoints, b_keypoints, tolerance: int = 2) -> float:
    """F1 of greedy one-to-one keypoint matching within +-tolerance frames.

    Keypoints are visited in time order; each takes the nearest unused
    partner within the tolerance (earlier partner on distance ties). Two
    empty sets count as a perfect match, one empty set as no match.
    """
    check_nonnegative(tolerance, "tolerance")
    ka = sorted(int(k) for k in a_keypoints)
    kb = sorted(int(k) for k in b_keypoints)
    if not ka and not kb:
        return 1.0
    if not ka or not kb:
        return 0.0
    used = [False] * len(kb)
    matches = 0
    for k in ka:
        best, best_dist = None, None
        for idx, cand in enumerate(kb):
            if used[idx]:
                continue
            dist = abs(cand - k)
            if dist <= tolerance and (best_dist is None or dist < best_dist):
                best, best_dist = idx, dist
        if best is not None:
            used[best] = True
            matches += 1
    return 2.0 * matches / (len(ka) + len(kb))


def rhythm_sim_matrix(audio_tracks, visual_tracks, match_tolerance: int = 2) -> np.ndarray:
    """Keypoint-matching F1 for every (audio, visual) pair, entries in [0,1]."""
    audio_tracks = list(audio_tracks)
    visual_tracks = list(visual_tracks)
    if not audio_tracks or not visual_tracks:
        raise InvalidInputError("both track collections must be non-empty")
    rates = {t.fps for t in audio_tracks} | {t.fps for t in visual_tracks}
    if len(rates) > 1:
        raise InvalidInputError(f"tracks mix frame rates: {sorted(rates)}")
    out = np.empty((len(audio_tracks), len(visual_tracks)))
    for i, at in enumerate(audio_tracks):
        for j, vt in enumerate(visual_tracks):
            out[i, j] = rhythm_match_f1(at.keypoints, vt.keypoints, match_tolerance)
    return out


def hybrid_similarity(s_e, s_r, params: RetrievalParams | None = None) -> np.ndarray:
    """Elementwise lambda3 * S_e + (1 - lambda3) * S_r."""
    params = params or RetrievalParams()
    se = as_float_array(s_e, "s_e", ndim=2)
    sr = as_float_array(s_r, "s_r", ndim=2)
    check_finite(se, "s_e")
    check_finite(sr, "s_r")
    if se.shape != sr.shape:
        raise InvalidInputError(f"matrix shapes differ: {se.shape} vs {sr.shape}")
    for name, m in (("s_e", se), ("s_r", sr)):
        if m.min() < 0.0 or m.max() > 1.0:
            raise InvalidInputError(f"{name} entries must lie in [0, 1]")
    return params.lambda3 * se + (1.0 - params.lambda3) * sr


def retrieve_topk(s_hyb, k: int) -> np.ndarray:
    """Per row, the indices of the k largest entries (descending score,
    ascending index on ties)."""
    m = as_float_array(s_hyb, "s_hyb", ndim=2)
    check_finite(m, "s_hyb")
    check_positive_int(k, "k")
    if k > m.shape[1]:
        raise InvalidInputError(f"k={k} exceeds the {m.shape[1]}-item database")
    cols = np.arange(m.shape[1])
    return np.stack([np.lexsort((cols, -row))[:k] for row in m])
