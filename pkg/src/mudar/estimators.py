"""Estimator-style wrappers around the detection pipelines.

Each estimator stores plain constructor arguments, exposes
get_params/set_params for introspective tuning, validates lazily, and
composes the functional pipeline underneath. fit is a no-op for the
heuristic detectors and gradient descent for the classifier.
"""

from __future__ import annotations

import inspect

import numpy as np

from .audio_rhythm import music_rhythm
from .datatypes import (
    AudioClip,
    FeatureSeq,
    OnsetParams,
    PeakPickParams,
    RhythmTrack,
    StftParams,
)
from .errors import FormatError, InvalidInputError
from .fileio import read_json_file, write_json_file
from .motion_rhythm import (
    FlowParams,
    HoofParams,
    RhythmClassifierParams,
    classifier_rhythm_track,
    first_order_diff,
    flow_sequence,
    motion_features,
    rgb_features,
    train_rhythm_classifier_batch,
    visual_rhythm_classifier,
    visual_rhythm_heuristic,
)
from .neural_blocks import FocalParams, arrays_from_tensor_map, tensor_map
from .validation import check_frame_stack

WEIGHTS_FORMAT = "rhythm-classifier-v1"


class ParamsMixin:
    """get_params/set_params over the constructor signature."""

    @classmethod
    def _param_names(cls) -> list[str]:
        sig = inspect.signature(cls.__init__)
        return sorted(name for name in sig.parameters if name != "self")

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params):
        known = set(self._param_names())
        for name, value in params.items():
            if name not in known:
                raise InvalidInputError(
                    f"unknown parameter {name!r} for {type(self).__name__}"
                )
            setattr(self, name, value)
        return self

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"{type(self).__name__}({args})"


class MusicRhythmDetector(ParamsMixin):
    """Onset keypoints and tempo from audio clips."""

    def __init__(
        self,
        window_size: int = 2048,
        hop: int = 512,
        lag: int = 1,
        max_filter_bins: int = 3,
        pre_max: int = 1,
        post_max: int = 1,
        pre_avg: int = 3,
        post_avg: int = 3,
        delta: float | None = None,
        wait: int = 2,
        bpm_range: tuple[float, float] = (60.0, 240.0),
    ) -> None:
        self.window_size = window_size
        self.hop = hop
        self.lag = lag
        self.max_filter_bins = max_filter_bins
        self.pre_max = pre_max
        self.post_max = post_max
        self.pre_avg = pre_avg
        self.post_avg = post_avg
        self.delta = delta
        self.wait = wait
        self.bpm_range = bpm_range

    def _pick_params(self) -> PeakPickParams:
        return PeakPickParams(
            pre_max=self.pre_max,
            post_max=self.post_max,
            pre_avg=self.pre_avg,
            post_avg=self.post_avg,
            delta=self.delta,
            wait=self.wait,
        )

    def fit(self, X=None, y=None) -> "MusicRhythmDetector":
        return self

    def detect(self, clip: AudioClip):
        """(envelope, rhythm track, tempo estimate) for one clip."""
        return music_rhythm(
            clip,
            stft_params=StftParams(window_size=self.window_size, hop=self.hop),
            onset_params=OnsetParams(lag=self.lag, max_filter_bins=self.max_filter_bins),
            pick_params=self._pick_params(),
            bpm_range=tuple(self.bpm_range),
        )

    def transform(self, X) -> list[RhythmTrack]:
        return [self.detect(clip)[1] for clip in X]

    def predict(self, X) -> list[RhythmTrack]:
        return self.transform(X)


class VisualRhythmDetector(ParamsMixin):
    """Motion-reversal keypoints from frame stacks, no learning."""

    def __init__(
        self,
        fps: float = 8.0,
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
    ) -> None:
        self.fps = fps
        self.bins = bins
        self.normalize = normalize
        self.smoothness = smoothness
        self.iterations = iterations
        self.pyramid_levels = pyramid_levels
        self.pre_max = pre_max
        self.post_max = post_max
        self.pre_avg = pre_avg
        self.post_avg = post_avg
        self.delta = delta
        self.wait = wait

    def _pick_params(self) -> PeakPickParams:
        return PeakPickParams(
            pre_max=self.pre_max,
            post_max=self.post_max,
            pre_avg=self.pre_avg,
            post_avg=self.post_avg,
            delta=self.delta,
            wait=self.wait,
        )

    def fit(self, X=None, y=None) -> "VisualRhythmDetector":
        return self

    def detect(self, frames) -> RhythmTrack:
        mot_diff, _ = classifier_features(
            frames,
            self.fps,
            flow=FlowParams(
                smoothness=self.smoothness,
                iterations=self.iterations,
                pyramid_levels=self.pyramid_levels,
            ),
            hoof=HoofParams(bins=self.bins, normalize=self.normalize),
        )
        return visual_rhythm_heuristic(mot_diff, self._pick_params())

    def transform(self, X) -> list[RhythmTrack]:
        return [self.detect(frames) for frames in X]

    def predict(self, X) -> list[RhythmTrack]:
        return self.transform(X)


def classifier_features(
    frames,
    fps: float,
    *,
    flow: FlowParams | None = None,
    hoof: HoofParams | None = None,
    grid: tuple[int, int] = (8, 8),
) -> tuple[FeatureSeq, FeatureSeq]:
    """Aligned (mot_diff, inj_diff) streams for a clip of T frames.

    Both outputs have T - 2 rows: the appearance stream has one extra
    natural diff row, dropped here so the pair feeds the classifier (which
    wants equal lengths) as well as the trainer.
    """
    arr = check_frame_stack(frames)
    fp = flow or FlowParams()
    hp = hoof or HoofParams()
    flows = flow_sequence(arr, **fp.kwargs())
    mot_diff = first_order_diff(motion_features(flows, fps, hp))
    inj_diff = first_order_diff(rgb_features(arr, fps, grid=grid))
    inj_diff = FeatureSeq(
        data=inj_diff.data[: mot_diff.n_frames], fps=inj_diff.fps, kind="diff"
    )
    return mot_diff, inj_diff


class VisualRhythmClassifier(ParamsMixin):
    """Learned per-frame keypoint classifier over motion and appearance diffs."""

    def __init__(
        self,
        fps: float = 8.0,
        bins: int = 8,
        normalize: bool = True,
        grid: tuple[int, int] = (8, 8),
        smoothness: float = 15.0,
        iterations: int = 100,
        pyramid_levels: int = 3,
        hidden_mot: int = 16,
        hidden_inj: int = 16,
        lr: float = 0.5,
        epochs: int = 300,
        seed: int = 0,
        dilate: int = 1,
        alpha_t: float = 0.25,
        gamma: float = 2.0,
        threshold: float = 0.5,
        pre_max: int = 1,
        post_max: int = 1,
        pre_avg: int = 3,
        post_avg: int = 3,
        delta: float | None = None,
        wait: int = 2,
    ) -> None:
        self.fps = fps
        self.bins = bins
        self.normalize = normalize
        self.grid = grid
        self.smoothness = smoothness
        self.iterations = iterations
        self.pyramid_levels = pyramid_levels
        self.hidden_mot = hidden_mot
        self.hidden_inj = hidden_inj
        self.lr = lr
        self.epochs = epochs
        self.seed = seed
        self.dilate = dilate
        self.alpha_t = alpha_t
        self.gamma = gamma
        self.threshold = threshold
        self.pre_max = pre_max
        self.post_max = post_max
        self.pre_avg = pre_avg
        self.post_avg = post_avg
        self.delta = delta
        self.wait = wait

    def _pick_params(self) -> PeakPickParams:
        return PeakPickParams(
            pre_max=self.pre_max,
            post_max=self.post_max,
            pre_avg=self.pre_avg,
            post_avg=self.post_avg,
            delta=self.delta,
            wait=self.wait,
        )

    def _features(self, frames) -> tuple[FeatureSeq, FeatureSeq]:
        return classifier_features(
            frames,
            self.fps,
            flow=FlowParams(
                smoothness=self.smoothness,
                iterations=self.iterations,
                pyramid_levels=self.pyramid_levels,
            ),
            hoof=HoofParams(bins=self.bins, normalize=self.normalize),
            grid=tuple(self.grid),
        )

    def fit(self, X, y) -> "VisualRhythmClassifier":
        """Train on clips X (frame stacks) labelled by keypoint sequences y."""
        X = list(X)
        y = list(y)
        if len(X) != len(y):
            raise InvalidInputError(f"got {len(X)} clips but {len(y)} label sequences")
        samples = []
        for frames, keypoints in zip(X, y):
            arr = check_frame_stack(frames)
            mot_diff, inj_diff = self._features(arr)
            labels = RhythmTrack(
                keypoints=tuple(int(k) for k in keypoints),
                fps=self.fps,
                length_frames=arr.shape[0],
                modality="audio",
            )
            samples.append((mot_diff, inj_diff, labels))
        self.params_, self.trace_ = train_rhythm_classifier_batch(
            samples,
            focal=FocalParams(alpha_t=self.alpha_t, gamma=self.gamma),
            lr=self.lr,
            epochs=self.epochs,
            seed=self.seed,
            hidden_mot=self.hidden_mot,
            hidden_inj=self.hidden_inj,
            dilate=self.dilate,
            return_trace=True,
        )
        return self

    def _fitted_params(self) -> RhythmClassifierParams:
        params = getattr(self, "params_", None)
        if params is None:
            raise InvalidInputError("classifier is not fitted; call fit first")
        return params

    def predict_proba(self, frames) -> np.ndarray:
        """Per-row keypoint probabilities for one clip (rows = frames - 2)."""
        mot_diff, inj_diff = self._features(frames)
        return visual_rhythm_classifier(mot_diff, inj_diff, self._fitted_params())

    def predict(self, frames) -> RhythmTrack:
        """Sparse keypoints for one clip."""
        arr = check_frame_stack(frames)
        probs = self.predict_proba(arr)
        return classifier_rhythm_track(
            probs,
            self.fps,
            arr.shape[0],
            pick=self._pick_params(),
            threshold=self.threshold,
        )

    def transform(self, X) -> list[RhythmTrack]:
        return [self.predict(frames) for frames in X]


def save_rhythm_classifier(path, clf: VisualRhythmClassifier) -> None:
    """Persist a fitted classifier (weights plus feature settings) as JSON."""
    params = clf._fitted_params()
    record = {
        "format": WEIGHTS_FORMAT,
        "config": {
            name: list(value) if isinstance(value, tuple) else value
            for name, value in clf.get_params().items()
        },
        "weights": tensor_map(
            {
                "w_mot": params.w_mot,
                "w_inj": params.w_inj,
                "w_e": params.w_e,
                "b_e": np.array(params.b_e),
            }
        ),
    }
    write_json_file(path, record)


def load_rhythm_classifier(path) -> VisualRhythmClassifier:
    """Rebuild a fitted classifier saved by save_rhythm_classifier."""
    record = read_json_file(path)
    if not isinstance(record, dict) or record.get("format") != WEIGHTS_FORMAT:
        raise FormatError(f"{path} is not a {WEIGHTS_FORMAT} weights file")
    try:
        config = dict(record["config"])
        arrays = arrays_from_tensor_map(record["weights"])
        weights = RhythmClassifierParams(
            w_mot=arrays["w_mot"],
            w_inj=arrays["w_inj"],
            w_e=arrays["w_e"],
            b_e=float(arrays["b_e"]),
        )
    except (KeyError, TypeError) as exc:
        raise FormatError(f"weights file is missing field {exc}") from None
    if "grid" in config and isinstance(config["grid"], list):
        config["grid"] = tuple(config["grid"])
    try:
        clf = VisualRhythmClassifier(**config)
    except TypeError as exc:
        raise FormatError(f"weights file has an invalid config: {exc}") from None
    clf.params_ = weights
    clf.trace_ = None
    return clf
