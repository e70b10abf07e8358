"""Visual rhythm extraction from grayscale frame sequences.

Dense optical flow comes from a coarse-to-fine Horn-Schunck solver. Each
flow field is summarised as a histogram of oriented flow (HOOF): vectors are
binned by angle to the nearest of ``bins`` evenly spaced bin centers and
weighted by magnitude. Direction changes then show up as large differences
between consecutive histograms, and the same peak picker used for audio
turns that difference signal into sparse visual keypoints.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np
from scipy.ndimage import convolve, gaussian_filter, map_coordinates

from .audio_rhythm import pick_peaks
from .datatypes import FeatureSeq, PeakPickParams, RhythmTrack
from .errors import (
    DegenerateLabelsError,
    FormatError,
    InputTooShortError,
    InvalidInputError,
)
from .neural_blocks import FocalParams, clamp_probs, focal_loss, focal_loss_grad, relu, sigmoid
from .validation import (
    as_float_array,
    check_finite,
    check_frame_stack,
    check_nonnegative,
    check_nonnegative_int,
    check_positive,
    check_positive_int,
    check_unit_interval,
)


@dataclass(frozen=True)
class FlowField:
    """Dense optical flow: pixel (y, x) in the source maps to
    (y + v[y, x], x + u[y, x]) in the target frame.
    """

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self) -> None:
        u = as_float_array(self.u, "u", ndim=2)
        v = as_float_array(self.v, "v", ndim=2)
        check_finite(u, "u")
        check_finite(v, "v")
        if u.shape != v.shape:
            raise InvalidInputError(f"u and v shapes differ: {u.shape} vs {v.shape}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u, self.v)

    def angle(self) -> np.ndarray:
        return np.arctan2(self.v, self.u)


@dataclass(frozen=True)
class FlowParams:
    """Settings of the variational flow estimator."""

    smoothness: float = 15.0
    iterations: int = 100
    pyramid_levels: int = 3

    def __post_init__(self) -> None:
        check_positive(self.smoothness, "smoothness")
        check_positive_int(self.iterations, "iterations")
        check_positive_int(self.pyramid_levels, "pyramid_levels")

    def kwargs(self) -> dict:
        return {
            "smoothness": self.smoothness,
            "iterations": self.iterations,
            "pyramid_levels": self.pyramid_levels,
        }


@dataclass(frozen=True)
class HoofParams:
    """Histogram-of-oriented-flow settings; at least 2 angular bins."""

    bins: int = 8
    normalize: bool = True

    def __post_init__(self) -> None:
        check_positive_int(self.bins, "bins")
        if self.bins < 2:
            raise InvalidInputError(f"bins must be >= 2, got {self.bins}")

    def kwargs(self) -> dict:
        return {"bins": self.bins, "normalize": self.normalize}


_HS_AVG_KERNEL = np.array(
    [
        [1.0 / 12.0, 1.0 / 6.0, 1.0 / 12.0],
        [1.0 / 6.0, 0.0, 1.0 / 6.0],
        [1.0 / 12.0, 1.0 / 6.0, 1.0 / 12.0],
    ]
)

_MIN_PYRAMID_SIDE = 8


def _resize(img: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Bilinear resample aligning pixel centers of the two grids."""
    h, w = img.shape
    hh, ww = shape
    ys = (np.arange(hh) + 0.5) * h / hh - 0.5
    xs = (np.arange(ww) + 0.5) * w / ww - 0.5
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    return map_coordinates(img, [gy, gx], order=1, mode="nearest")


def _warp(img: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Sample img at (y + v, x + u) with a cubic spline; bilinear warping
    attenuates high frequencies enough to bias the flow estimate.
    """
    h, w = img.shape
    gy, gx = np.mgrid[0:h, 0:w]
    return map_coordinates(img, [gy + v, gx + u], order=3, mode="nearest")


def _hs_iterate(
    f0: np.ndarray, f1: np.ndarray, alpha_sq: float, iterations: int
) -> tuple[np.ndarray, np.ndarray]:
    """Horn-Schunck relaxation for the flow increment from f0 to f1.

    Each iteration runs two red-black half-sweeps so updates see fresh
    neighbor values; plain Jacobi needs several times more iterations to
    propagate across weakly textured regions.
    """
    ix = 0.5 * (np.gradient(f0, axis=1) + np.gradient(f1, axis=1))
    iy = 0.5 * (np.gradient(f0, axis=0) + np.gradient(f1, axis=0))
    it = f1 - f0
    denom = alpha_sq + ix * ix + iy * iy
    u = np.zeros_like(f0)
    v = np.zeros_like(f0)
    gy, gx = np.mgrid[0 : f0.shape[0], 0 : f0.shape[1]]
    cells = [(gy + gx) % 2 == 0, (gy + gx) % 2 == 1]
    for _ in range(iterations):
        for mask in cells:
            u_avg = convolve(u, _HS_AVG_KERNEL, mode="nearest")
            v_avg = convolve(v, _HS_AVG_KERNEL, mode="nearest")
            shared = (ix * u_avg + iy * v_avg + it) / denom
            u[mask] = (u_avg - ix * shared)[mask]
            v[mask] = (v_avg - iy * shared)[mask]
    return u, v


def horn_schunck(
    frame0,
    frame1,
    smoothness: float = 15.0,
    iterations: int = 100,
    pyramid_levels: int = 3,
) -> FlowField:
    """Dense flow between two frames via coarse-to-fine Horn-Schunck.

    Frames hold intensities in [0, 1] and are scaled internally to the 8-bit
    range the default smoothness weight is calibrated for. Each pyramid
    level halves the resolution (halting early when a side would drop below
    8 pixels). The flow estimated at a coarser level warps the target frame
    at the next finer level, and a fresh relaxation solves for the residual
    increment.
    """
    f0 = 255.0 * as_float_array(frame0, "frame0", ndim=2)
    f1 = 255.0 * as_float_array(frame1, "frame1", ndim=2)
    check_finite(f0, "frame0")
    check_finite(f1, "frame1")
    if f0.shape != f1.shape:
        raise InvalidInputError(f"frame shapes differ: {f0.shape} vs {f1.shape}")
    if min(f0.shape) < 2:
        raise InputTooShortError(f"frames must be at least 2x2, got {f0.shape}")
    check_positive(smoothness, "smoothness")
    check_positive_int(iterations, "iterations")
    check_positive_int(pyramid_levels, "pyramid_levels")

    pyr0, pyr1 = [f0], [f1]
    for _ in range(pyramid_levels - 1):
        h, w = pyr0[-1].shape
        if min(h, w) < 2 * _MIN_PYRAMID_SIDE:
            break
        # Anti-alias before decimating so coarse levels stay faithful.
        blur0 = gaussian_filter(pyr0[-1], sigma=1.0, mode="nearest")
        blur1 = gaussian_filter(pyr1[-1], sigma=1.0, mode="nearest")
        pyr0.append(_resize(blur0, (h // 2, w // 2)))
        pyr1.append(_resize(blur1, (h // 2, w // 2)))

    alpha_sq = float(smoothness) ** 2
    u = np.zeros_like(pyr0[-1])
    v = np.zeros_like(pyr0[-1])
    for level in range(len(pyr0) - 1, -1, -1):
        a, b = pyr0[level], pyr1[level]
        if u.shape != a.shape:
            scale_x = a.shape[1] / u.shape[1]
            scale_y = a.shape[0] / u.shape[0]
            u = _resize(u, a.shape) * scale_x
            v = _resize(v, a.shape) * scale_y
        if np.any(u) or np.any(v):
            warped = _warp(b, u, v)
        else:
            warped = b
        du, dv = _hs_iterate(a, warped, alpha_sq, iterations)
        u = u + du
        v = v + dv
    return FlowField(u=u, v=v)


def flow_sequence(frames, **kwargs) -> list[FlowField]:
    """Flow between every consecutive frame pair of a (T, H, W) stack."""
    arr = as_float_array(frames, "frames", ndim=3)
    check_finite(arr, "frames")
    if arr.shape[0] < 2:
        raise InputTooShortError(f"need at least 2 frames, got {arr.shape[0]}")
    return [horn_schunck(arr[t], arr[t + 1], **kwargs) for t in range(arr.shape[0] - 1)]


def estimate_flow(prev, next_frame, params: FlowParams | None = None) -> FlowField:
    """Dense displacement from prev to next_frame (coarse-to-fine solver)."""
    p = params or FlowParams()
    return horn_schunck(prev, next_frame, **p.kwargs())


_FLO_MAGIC = 202021.25
_FLO_HEADER = struct.Struct("<fii")


def read_flo(data: bytes) -> FlowField:
    """Decode Middlebury flow bytes: float32 magic, int32 w/h, (u,v) pairs."""
    if len(data) < _FLO_HEADER.size:
        raise FormatError(f"flow stream has {len(data)} bytes, header needs 12")
    magic, w, h = _FLO_HEADER.unpack_from(data)
    if magic != _FLO_MAGIC:
        raise FormatError(f"bad flow magic {magic!r}, expected {_FLO_MAGIC}")
    if w <= 0 or h <= 0:
        raise FormatError(f"non-positive flow dimensions {w}x{h}")
    expected = _FLO_HEADER.size + 8 * w * h
    if len(data) != expected:
        raise FormatError(f"flow payload has {len(data)} bytes, expected {expected}")
    plane = np.frombuffer(data, dtype="<f4", offset=_FLO_HEADER.size).reshape(h, w, 2)
    return FlowField(u=plane[:, :, 0], v=plane[:, :, 1])


def write_flo(flow: FlowField) -> bytes:
    """Encode a FlowField as Middlebury flow bytes (inverse of read_flo)."""
    h, w = flow.shape
    plane = np.empty((h, w, 2), dtype="<f4")
    plane[:, :, 0] = flow.u
    plane[:, :, 1] = flow.v
    return _FLO_HEADER.pack(_FLO_MAGIC, w, h) + plane.tobytes()


def hoof(flow: FlowField, bins: int = 8, normalize: bool = True) -> np.ndarray:
    """Histogram of oriented flow.

    Each nonzero vector contributes its magnitude to the bin whose center
    ``2*pi*k/bins`` is nearest to its angle; the boundary halfway between
    two centers belongs to the upper bin. An all-zero field yields an
    all-zero histogram even when ``normalize`` is set.
    """
    check_positive_int(bins, "bins")
    if bins < 2:
        raise InvalidInputError(f"bins must be >= 2, got {bins}")
    mag = np.hypot(flow.u, flow.v)
    mask = mag > 0.0
    hist = np.zeros(bins, dtype=np.float64)
    if np.any(mask):
        theta = np.mod(np.arctan2(flow.v[mask], flow.u[mask]), 2.0 * np.pi)
        idx = np.floor((theta + np.pi / bins) * bins / (2.0 * np.pi)).astype(np.int64) % bins
        hist = np.bincount(idx, weights=mag[mask], minlength=bins).astype(np.float64)
    total = hist.sum()
    if normalize and total > 0.0:
        hist = hist / total
    return hist


def hoof_sequence(flows, bins: int = 8, normalize: bool = True) -> np.ndarray:
    """Stack of HOOF rows, one per flow field."""
    if len(flows) == 0:
        raise InputTooShortError("need at least one flow field")
    return np.stack([hoof(f, bins=bins, normalize=normalize) for f in flows])


def pooled_frame_features(frames, grid: tuple[int, int] = (8, 8)) -> np.ndarray:
    """Mean-pool each frame over a near-uniform grid, row-major cell order."""
    arr = as_float_array(frames, "frames", ndim=3)
    check_finite(arr, "frames")
    gh, gw = grid
    check_positive_int(gh, "grid rows")
    check_positive_int(gw, "grid cols")
    t, h, w = arr.shape
    if h < gh or w < gw:
        raise InvalidInputError(f"frames of shape {h}x{w} cannot be pooled to a {gh}x{gw} grid")
    row_edges = (np.arange(gh + 1) * h) // gh
    col_edges = (np.arange(gw + 1) * w) // gw
    feats = np.empty((t, gh * gw), dtype=np.float64)
    cell = 0
    for i in range(gh):
        for j in range(gw):
            block = arr[:, row_edges[i] : row_edges[i + 1], col_edges[j] : col_edges[j + 1]]
            feats[:, cell] = block.mean(axis=(1, 2))
            cell += 1
    return feats


def feature_diffs(features) -> np.ndarray:
    """Consecutive row differences: row d is ``features[d+1] - features[d]``."""
    arr = as_float_array(features, "features", ndim=2)
    check_finite(arr, "features")
    if arr.shape[0] < 2:
        raise InputTooShortError(f"need at least 2 feature rows, got {arr.shape[0]}")
    return arr[1:] - arr[:-1]


def motion_change_envelope(frames, *, bins: int = 8, normalize: bool = True,
                           smoothness: float = 15.0, iterations: int = 100,
                           pyramid_levels: int = 3) -> np.ndarray:
    """Per-step motion change strength: L2 norm of consecutive HOOF diffs.

    Entry d compares the flow over frames (d, d+1) with the flow over
    (d+1, d+2), so a motion extremum at frame r spikes entry r - 1.
    """
    arr = check_frame_stack(frames)
    if arr.shape[0] < 3:
        raise InputTooShortError(f"need at least 3 frames, got {arr.shape[0]}")
    flows = flow_sequence(arr, smoothness=smoothness, iterations=iterations,
                          pyramid_levels=pyramid_levels)
    hists = hoof_sequence(flows, bins=bins, normalize=normalize)
    return np.linalg.norm(feature_diffs(hists), axis=1)


def visual_rhythm_track(
    frames,
    fps: float,
    *,
    bins: int = 8,
    normalize: bool = True,
    smoothness: float = 15.0,
    iterations: int = 100,
    pyramid_levels: int = 3,
    pre_max: int = 1,
    post_max: int = 1,
    pre_avg: int = 3,
    post_avg: int = 3,
    delta: float | None = None,
    wait: int = 2,
) -> RhythmTrack:
    """Full visual pipeline: frames to sparse rhythm keypoints.

    Envelope peaks sit one step before the motion extremum they witness, so
    detected peak indices are shifted by +1 to land on the extremum frame.
    """
    arr = check_frame_stack(frames)
    check_positive(fps, "fps")
    env = motion_change_envelope(
        arr, bins=bins, normalize=normalize, smoothness=smoothness,
        iterations=iterations, pyramid_levels=pyramid_levels,
    )
    peaks = pick_peaks(
        env, pre_max=pre_max, post_max=post_max, pre_avg=pre_avg,
        post_avg=post_avg, delta=delta, wait=wait,
    )
    return RhythmTrack(
        keypoints=tuple(int(p) + 1 for p in peaks),
        fps=fps,
        length_frames=arr.shape[0],
        modality="visual",
    )


def make_frame_labels(track: RhythmTrack, dilate: int = 1) -> np.ndarray:
    """Binary per-frame training targets with keypoints dilated by +-dilate."""
    check_nonnegative(dilate, "dilate")
    labels = np.zeros(track.length_frames, dtype=np.float64)
    for k in track.keypoints:
        labels[max(0, k - dilate) : min(track.length_frames, k + dilate + 1)] = 1.0
    return labels


def motion_features(flows, fps: float, params: HoofParams | None = None) -> FeatureSeq:
    """Per-step motion descriptor: HOOF weights plus a total-magnitude column.

    Row t summarises flows[t] as its B-bin histogram concatenated with the
    sum of flow magnitudes, giving a T x (B+1) sequence. Normalization
    divides the magnitude column by the same total it divides the histogram
    by, so normalized rows are invariant to scaling every vector by c > 0
    (the column degenerates to a motion-presence flag); without it the raw
    total is kept.
    """
    p = params or HoofParams()
    check_positive(fps, "fps")
    if len(flows) == 0:
        raise InputTooShortError("need at least one flow field")
    shape = flows[0].shape
    rows = np.empty((len(flows), p.bins + 1), dtype=np.float64)
    for t, field in enumerate(flows):
        if field.shape != shape:
            raise InvalidInputError(
                f"flow {t} has shape {field.shape}, expected {shape}"
            )
        rows[t, : p.bins] = hoof(field, **p.kwargs())
        total = field.magnitude().sum()
        if p.normalize:
            rows[t, p.bins] = 1.0 if total > 0.0 else 0.0
        else:
            rows[t, p.bins] = total
    return FeatureSeq(data=rows, fps=fps, kind="motion")


def rgb_features(frames, fps: float, grid: tuple[int, int] = (8, 8)) -> FeatureSeq:
    """Per-frame appearance descriptor: grid-pooled mean intensities."""
    check_positive(fps, "fps")
    return FeatureSeq(data=pooled_frame_features(frames, grid=grid), fps=fps, kind="rgb")


def first_order_diff(f: FeatureSeq) -> FeatureSeq:
    """Consecutive-row differences of a feature sequence (kind becomes diff)."""
    if f.n_frames < 2:
        raise InputTooShortError(f"need at least 2 rows to difference, got {f.n_frames}")
    return FeatureSeq(data=f.data[1:] - f.data[:-1], fps=f.fps, kind="diff")


def _check_diff_seq(seq: FeatureSeq, name: str) -> FeatureSeq:
    if seq.kind != "diff":
        raise InvalidInputError(f"{name} must have kind 'diff', got {seq.kind!r}")
    return seq


def visual_rhythm_heuristic(
    mot_diff: FeatureSeq, pick: PeakPickParams | None = None
) -> RhythmTrack:
    """Non-learned keypoint detector on motion-difference magnitudes.

    The envelope is the per-row L2 norm of mot_diff. Row d compares the
    flow into frame d+1 with the flow out of it, so peak indices shift by
    +1 to land on the frame where the motion actually turns; the clip had
    two more frames than mot_diff has rows.
    """
    _check_diff_seq(mot_diff, "mot_diff")
    pp = pick or PeakPickParams()
    env = np.linalg.norm(mot_diff.data, axis=1)
    peaks = pick_peaks(env, **pp.kwargs())
    return RhythmTrack(
        keypoints=tuple(int(p) + 1 for p in peaks),
        fps=mot_diff.fps,
        length_frames=mot_diff.n_frames + 2,
        modality="visual",
    )


@dataclass(frozen=True)
class RhythmClassifierParams:
    """Two-branch logistic frame classifier.

    Each branch is a bias-free linear map followed by ReLU; the concatenated
    branch activations feed one logistic output unit (w_e, b_e).
    """

    w_mot: np.ndarray
    w_inj: np.ndarray
    w_e: np.ndarray
    b_e: float

    def __post_init__(self) -> None:
        w_mot = as_float_array(self.w_mot, "w_mot", ndim=2)
        w_inj = as_float_array(self.w_inj, "w_inj", ndim=2)
        w_e = as_float_array(self.w_e, "w_e", ndim=1)
        check_finite(w_mot, "w_mot")
        check_finite(w_inj, "w_inj")
        check_finite(w_e, "w_e")
        if not np.isfinite(self.b_e):
            raise InvalidInputError("b_e must be finite")
        if w_e.shape[0] != w_mot.shape[0] + w_inj.shape[0]:
            raise InvalidInputError(
                f"w_e has length {w_e.shape[0]}, branches give "
                f"{w_mot.shape[0]} + {w_inj.shape[0]} activations"
            )
        object.__setattr__(self, "w_mot", w_mot)
        object.__setattr__(self, "w_inj", w_inj)
        object.__setattr__(self, "w_e", w_e)
        object.__setattr__(self, "b_e", float(self.b_e))

    @property
    def hidden_mot(self) -> int:
        return self.w_mot.shape[0]

    @property
    def hidden_inj(self) -> int:
        return self.w_inj.shape[0]


def init_rhythm_classifier_params(
    d_mot: int,
    d_inj: int,
    hidden_mot: int = 16,
    hidden_inj: int = 16,
    seed: int = 0,
) -> RhythmClassifierParams:
    """Seeded N(0, 0.1) branch weights, zero output layer."""
    check_positive_int(d_mot, "d_mot")
    check_positive_int(d_inj, "d_inj")
    check_positive_int(hidden_mot, "hidden_mot")
    check_positive_int(hidden_inj, "hidden_inj")
    rng = np.random.default_rng(seed)
    return RhythmClassifierParams(
        w_mot=0.1 * rng.standard_normal((hidden_mot, d_mot)),
        w_inj=0.1 * rng.standard_normal((hidden_inj, d_inj)),
        w_e=0.1 * rng.standard_normal(hidden_mot + hidden_inj),
        b_e=0.0,
    )


def _check_classifier_inputs(
    mot_diff: FeatureSeq, inj_diff: FeatureSeq, params: RhythmClassifierParams
) -> tuple[np.ndarray, np.ndarray]:
    _check_diff_seq(mot_diff, "mot_diff")
    _check_diff_seq(inj_diff, "inj_diff")
    if mot_diff.n_frames != inj_diff.n_frames:
        raise InvalidInputError(
            f"time lengths differ: mot_diff has {mot_diff.n_frames} rows, "
            f"inj_diff has {inj_diff.n_frames}"
        )
    if mot_diff.dim != params.w_mot.shape[1]:
        raise InvalidInputError(
            f"mot_diff width {mot_diff.dim} does not match w_mot ({params.w_mot.shape[1]})"
        )
    if inj_diff.dim != params.w_inj.shape[1]:
        raise InvalidInputError(
            f"inj_diff width {inj_diff.dim} does not match w_inj ({params.w_inj.shape[1]})"
        )
    return mot_diff.data, inj_diff.data


def visual_rhythm_classifier(
    mot_diff: FeatureSeq, inj_diff: FeatureSeq, params: RhythmClassifierParams
) -> np.ndarray:
    """Per-row keypoint probabilities, strictly inside (0, 1).

    p = sigmoid(w_e . (relu(w_mot f_mot) concat relu(w_inj f_inj)) + b_e).
    """
    mot, inj = _check_classifier_inputs(mot_diff, inj_diff, params)
    h = np.concatenate([relu(mot @ params.w_mot.T), relu(inj @ params.w_inj.T)], axis=1)
    return clamp_probs(sigmoid(h @ params.w_e + params.b_e))


def classifier_loss_and_grads(
    mot: np.ndarray,
    inj: np.ndarray,
    targets: np.ndarray,
    params: RhythmClassifierParams,
    focal: FocalParams | None = None,
) -> tuple[float, dict]:
    """Mean focal loss of the classifier and its parameter gradients."""
    focal = focal or FocalParams()
    h_m_pre = mot @ params.w_mot.T
    h_i_pre = inj @ params.w_inj.T
    h_m = relu(h_m_pre)
    h_i = relu(h_i_pre)
    z = h_m @ params.w_e[: params.hidden_mot] + h_i @ params.w_e[params.hidden_mot :] \
        + params.b_e
    p = sigmoid(z)
    p_safe = clamp_probs(p)
    loss = focal_loss(p_safe, targets, focal)
    # d(loss)/dz via the unclamped sigmoid slope; at clamped points the
    # slope is ~0 anyway, matching the saturated true gradient.
    d_z = focal_loss_grad(p_safe, targets, focal) * p * (1.0 - p)
    d_w_e = np.concatenate([h_m.T @ d_z, h_i.T @ d_z])
    d_h_m = np.outer(d_z, params.w_e[: params.hidden_mot]) * (h_m_pre > 0)
    d_h_i = np.outer(d_z, params.w_e[params.hidden_mot :]) * (h_i_pre > 0)
    grads = {
        "w_mot": d_h_m.T @ mot,
        "w_inj": d_h_i.T @ inj,
        "w_e": d_w_e,
        "b_e": float(d_z.sum()),
    }
    return loss, grads


def _classifier_training_arrays(
    mot_diff: FeatureSeq, inj_diff: FeatureSeq, labels: RhythmTrack, dilate: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Validate one clip's streams and build its (mot, inj, targets) rows."""
    _check_diff_seq(mot_diff, "mot_diff")
    _check_diff_seq(inj_diff, "inj_diff")
    check_nonnegative_int(dilate, "dilate")
    t = mot_diff.n_frames
    if inj_diff.n_frames == t + 1:
        inj_diff = FeatureSeq(data=inj_diff.data[:t], fps=inj_diff.fps, kind="diff")
    elif inj_diff.n_frames != t:
        raise InvalidInputError(
            f"inj_diff has {inj_diff.n_frames} rows, expected {t} or {t + 1}"
        )
    if labels.fps != mot_diff.fps:
        raise InvalidInputError(
            f"label rate {labels.fps} does not match feature rate {mot_diff.fps}"
        )
    if labels.length_frames != t + 2:
        raise InvalidInputError(
            f"labels cover {labels.length_frames} frames, features imply {t + 2}"
        )
    targets = make_frame_labels(labels, dilate=dilate)[1 : t + 1]
    return mot_diff.data, inj_diff.data, targets


def _fit_classifier(
    mot: np.ndarray,
    inj: np.ndarray,
    targets: np.ndarray,
    focal: FocalParams | None,
    lr: float,
    epochs: int,
    seed: int,
    hidden_mot: int,
    hidden_inj: int,
    return_trace: bool,
):
    check_positive(lr, "lr")
    check_positive_int(epochs, "epochs")
    n_pos = int(targets.sum())
    if n_pos == 0:
        raise DegenerateLabelsError("no positive frames to learn from")
    if n_pos == targets.size:
        raise DegenerateLabelsError("no negative frames to learn from")

    params = init_rhythm_classifier_params(
        mot.shape[1], inj.shape[1], hidden_mot=hidden_mot, hidden_inj=hidden_inj,
        seed=seed,
    )
    focal = focal or FocalParams()
    trace = []
    for _ in range(epochs):
        loss, grads = classifier_loss_and_grads(mot, inj, targets, params, focal)
        trace.append(loss)
        params = replace(
            params,
            w_mot=params.w_mot - lr * grads["w_mot"],
            w_inj=params.w_inj - lr * grads["w_inj"],
            w_e=params.w_e - lr * grads["w_e"],
            b_e=params.b_e - lr * grads["b_e"],
        )
    trace.append(classifier_loss_and_grads(mot, inj, targets, params, focal)[0])
    if return_trace:
        return params, trace
    return params


def train_rhythm_classifier(
    mot_diff: FeatureSeq,
    inj_diff: FeatureSeq,
    labels: RhythmTrack,
    focal: FocalParams | None = None,
    lr: float = 0.5,
    epochs: int = 200,
    seed: int = 0,
    *,
    hidden_mot: int = 16,
    hidden_inj: int = 16,
    dilate: int = 1,
    return_trace: bool = False,
):
    """Fit the frame classifier by full-batch gradient descent.

    Labels come from a rhythm track over the whole clip; keypoints are
    dilated by +-dilate frames into binary targets, then cropped to the
    frames the diff rows witness (row d describes frame d+1). inj_diff may
    carry one extra trailing row (an appearance diff exists for the last
    frame transition while a motion diff does not); it is dropped.
    """
    mot, inj, targets = _classifier_training_arrays(mot_diff, inj_diff, labels, dilate)
    return _fit_classifier(
        mot, inj, targets, focal, lr, epochs, seed, hidden_mot, hidden_inj,
        return_trace,
    )


def train_rhythm_classifier_batch(
    samples,
    focal: FocalParams | None = None,
    lr: float = 0.5,
    epochs: int = 200,
    seed: int = 0,
    *,
    hidden_mot: int = 16,
    hidden_inj: int = 16,
    dilate: int = 1,
    return_trace: bool = False,
):
    """Fit one classifier on several clips at once.

    samples is a sequence of (mot_diff, inj_diff, labels) triples, each
    validated like a train_rhythm_classifier call; their frame rows are
    stacked so targets never dilate across clip boundaries. Degenerate
    labels are judged on the pooled targets.
    """
    samples = list(samples)
    if not samples:
        raise InvalidInputError("need at least one training clip")
    mots, injs, targets = [], [], []
    for mot_diff, inj_diff, labels in samples:
        m, i, t = _classifier_training_arrays(mot_diff, inj_diff, labels, dilate)
        if mots and (m.shape[1] != mots[0].shape[1] or i.shape[1] != injs[0].shape[1]):
            raise InvalidInputError(
                f"clip feature widths ({m.shape[1]}, {i.shape[1]}) do not match "
                f"the first clip's ({mots[0].shape[1]}, {injs[0].shape[1]})"
            )
        mots.append(m)
        injs.append(i)
        targets.append(t)
    return _fit_classifier(
        np.concatenate(mots),
        np.concatenate(injs),
        np.concatenate(targets),
        focal, lr, epochs, seed, hidden_mot, hidden_inj, return_trace,
    )


def classifier_rhythm_track(
    probs,
    fps: float,
    length_frames: int,
    pick: PeakPickParams | None = None,
    threshold: float = 0.5,
) -> RhythmTrack:
    """Turn per-row probabilities into sparse visual keypoints.

    Probabilities below the threshold are zeroed, the peak rule picks local
    maxima of the rest, and indices shift by +1 (row d speaks for frame
    d+1, as in visual_rhythm_heuristic).
    """
    p = as_float_array(probs, "probs", ndim=1)
    check_finite(p, "probs")
    check_positive(fps, "fps")
    check_positive_int(length_frames, "length_frames")
    check_unit_interval(threshold, "threshold")
    if length_frames != p.shape[0] + 2:
        raise InvalidInputError(
            f"length_frames {length_frames} does not match {p.shape[0]} rows + 2"
        )
    pp = pick or PeakPickParams()
    gated = np.where(p >= threshold, p, 0.0)
    peaks = pick_peaks(gated, **pp.kwargs())
    return RhythmTrack(
        keypoints=tuple(int(k) + 1 for k in peaks),
        fps=fps,
        length_frames=length_frames,
        modality="visual",
    )
