"""Unit tests for the estimator wrappers and weight persistence."""

import numpy as np
import pytest

from mudar.datatypes import RhythmTrack
from mudar.errors import FormatError, InvalidInputError
from mudar.estimators import (
    MusicRhythmDetector,
    VisualRhythmClassifier,
    VisualRhythmDetector,
    classifier_features,
    load_rhythm_classifier,
    save_rhythm_classifier,
)
from mudar.retarget import rhythm_match_f1
from mudar.synthetic import SyntheticSpec, synthesize


@pytest.fixture(scope="module")
def corpus():
    clips = [
        synthesize(SyntheticSpec(clip_seconds=4.0, bpm=90.0, jitter_frames=0, seed=s))
        for s in (0, 1)
    ]
    return (
        [c.frames for c in clips],
        [c.truth["audio_keypoints"] for c in clips],
        [c.truth["visual_keypoints"] for c in clips],
    )


@pytest.fixture(scope="module")
def fitted(corpus):
    stacks, audio_kps, _ = corpus
    clf = VisualRhythmClassifier(epochs=300)
    clf.fit(stacks, audio_kps)
    return clf


class TestParamsInterface:
    def test_get_params_covers_constructor(self):
        det = MusicRhythmDetector(hop=256)
        params = det.get_params()
        assert params["hop"] == 256
        assert params["window_size"] == 2048
        assert "bpm_range" in params

    def test_set_params_round_trip(self):
        det = VisualRhythmDetector()
        det.set_params(bins=12, wait=4)
        assert det.get_params()["bins"] == 12
        assert det.wait == 4

    def test_set_params_returns_self(self):
        det = VisualRhythmDetector()
        assert det.set_params(fps=10.0) is det

    def test_unknown_param_rejected(self):
        with pytest.raises(InvalidInputError):
            MusicRhythmDetector().set_params(bogus=1)

    def test_clone_via_params(self):
        first = VisualRhythmClassifier(epochs=7, bins=6)
        second = VisualRhythmClassifier(**first.get_params())
        assert second.get_params() == first.get_params()

    def test_repr_names_class(self):
        assert repr(MusicRhythmDetector()).startswith("MusicRhythmDetector(")


class TestMusicRhythmDetector:
    def test_detect_counts_metronome_events(self, corpus):
        clip = synthesize(SyntheticSpec(clip_seconds=4.0, bpm=90.0, seed=0))
        env, track, tempo = MusicRhythmDetector().detect(clip.audio)
        assert track.n_keypoints == len(clip.truth["beat_times_s"])
        assert track.modality == "audio"
        assert abs(tempo.bpm - 90.0) < 2.0
        assert env.n_frames > 0

    def test_transform_returns_track_per_clip(self):
        clips = [
            synthesize(SyntheticSpec(clip_seconds=2.0, bpm=120.0, seed=s)).audio
            for s in (0, 1)
        ]
        tracks = MusicRhythmDetector().transform(clips)
        assert len(tracks) == 2
        assert all(isinstance(t, RhythmTrack) for t in tracks)

    def test_huge_fixed_delta_silences_detection(self):
        clip = synthesize(SyntheticSpec(clip_seconds=2.0, seed=0)).audio
        track = MusicRhythmDetector(delta=1e9).transform([clip])[0]
        assert track.n_keypoints == 0

    def test_fit_is_noop(self):
        det = MusicRhythmDetector()
        assert det.fit() is det


class TestClassifierFeatures:
    def test_aligned_shapes(self, corpus):
        stacks, _, _ = corpus
        mot, inj = classifier_features(stacks[0][:8], 8.0)
        assert mot.n_frames == 6
        assert inj.n_frames == 6
        assert mot.kind == "diff" and inj.kind == "diff"
        assert mot.dim == 9
        assert inj.dim == 64
        assert mot.fps == 8.0

    def test_grid_controls_appearance_width(self, corpus):
        stacks, _, _ = corpus
        _, inj = classifier_features(stacks[0][:6], 8.0, grid=(2, 2))
        assert inj.dim == 4


class TestVisualRhythmDetector:
    def test_recovers_reversal_frames(self, corpus):
        stacks, _, visual_kps = corpus
        track = VisualRhythmDetector().detect(stacks[0])
        assert list(track.keypoints) == visual_kps[0]
        assert track.modality == "visual"
        assert track.length_frames == stacks[0].shape[0]

    def test_transform_matches_detect(self, corpus):
        stacks, _, _ = corpus
        det = VisualRhythmDetector()
        assert det.transform([stacks[0]])[0] == det.detect(stacks[0])


class TestVisualRhythmClassifier:
    def test_fit_exposes_params_and_trace(self, fitted):
        assert fitted.params_.w_mot.shape == (16, 9)
        assert fitted.params_.w_inj.shape == (16, 64)
        assert len(fitted.trace_) == fitted.epochs + 1
        assert fitted.trace_[-1] < fitted.trace_[0]

    def test_predict_recovers_truth(self, corpus, fitted):
        stacks, _, visual_kps = corpus
        track = fitted.predict(stacks[0])
        assert rhythm_match_f1(track.keypoints, visual_kps[0], tolerance=1) == 1.0

    def test_predict_proba_strictly_inside_unit_interval(self, corpus, fitted):
        stacks, _, _ = corpus
        probs = fitted.predict_proba(stacks[1])
        assert probs.shape == (stacks[1].shape[0] - 2,)
        assert probs.min() > 0.0 and probs.max() < 1.0

    def test_transform_maps_predict(self, corpus, fitted):
        stacks, _, _ = corpus
        assert fitted.transform([stacks[1]])[0] == fitted.predict(stacks[1])

    def test_unfitted_predict_rejected(self, corpus):
        stacks, _, _ = corpus
        with pytest.raises(InvalidInputError):
            VisualRhythmClassifier().predict(stacks[0])

    def test_mismatched_labels_rejected(self, corpus):
        stacks, audio_kps, _ = corpus
        with pytest.raises(InvalidInputError):
            VisualRhythmClassifier().fit(stacks, audio_kps[:1])


class TestWeightsPersistence:
    def test_round_trip_preserves_prediction(self, tmp_path, corpus, fitted):
        stacks, _, _ = corpus
        path = tmp_path / "weights.json"
        save_rhythm_classifier(path, fitted)
        loaded = load_rhythm_classifier(path)
        assert np.array_equal(loaded.params_.w_mot, fitted.params_.w_mot)
        assert np.array_equal(loaded.params_.w_e, fitted.params_.w_e)
        assert loaded.params_.b_e == fitted.params_.b_e
        assert loaded.get_params() == fitted.get_params()
        assert loaded.predict(stacks[0]) == fitted.predict(stacks[0])

    def test_unfitted_save_rejected(self, tmp_path):
        with pytest.raises(InvalidInputError):
            save_rhythm_classifier(tmp_path / "w.json", VisualRhythmClassifier())

    def test_wrong_format_rejected(self, tmp_path):
        path = tmp_path / "w.json"
        path.write_text('{"format": "something-else"}')
        with pytest.raises(FormatError):
            load_rhythm_classifier(path)

    def test_missing_weights_rejected(self, tmp_path):
        path = tmp_path / "w.json"
        path.write_text('{"format": "rhythm-classifier-v1", "config": {}}')
        with pytest.raises(FormatError):
            load_rhythm_classifier(path)
