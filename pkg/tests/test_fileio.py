"""Unit tests for the disk codecs: WAV, frames, .flo, CSV, and JSON."""

import os

import numpy as np
import pytest

from mudar.datatypes import AudioClip, OnsetEnvelope
from mudar.errors import FormatError
from mudar.fileio import (
    atomic_path,
    read_envelope_csv,
    read_flo_dir,
    read_flo_file,
    read_frame,
    read_frames_dir,
    read_json_file,
    read_wav,
    write_envelope_csv,
    write_flo_file,
    write_frame,
    write_frames_dir,
    write_json_file,
    write_text,
    write_wav,
)
from mudar.motion_rhythm import FlowField


class TestAtomicPath:
    def test_successful_write_lands_at_target(self, tmp_path):
        target = tmp_path / "deep" / "file.txt"
        with atomic_path(target) as tmp:
            tmp.write_text("payload")
        assert target.read_text() == "payload"

    def test_no_temp_file_survives(self, tmp_path):
        target = tmp_path / "file.txt"
        with atomic_path(target) as tmp:
            tmp.write_text("x")
        assert os.listdir(tmp_path) == ["file.txt"]

    def test_failure_leaves_no_artifact(self, tmp_path):
        target = tmp_path / "file.txt"
        with pytest.raises(RuntimeError):
            with atomic_path(target) as tmp:
                tmp.write_text("partial")
                raise RuntimeError("boom")
        assert os.listdir(tmp_path) == []

    def test_overwrite_is_atomic_replacement(self, tmp_path):
        target = tmp_path / "file.txt"
        write_text(target, "old")
        write_text(target, "new")
        assert target.read_text() == "new"


class TestWav:
    def test_round_trip_is_exact_at_pcm16_grid(self, tmp_path):
        rng = np.random.default_rng(0)
        quantised = np.round(rng.uniform(-1, 1, 2000) * 32767.0) / 32767.0
        clip = AudioClip(samples=quantised, rate=16000)
        path = tmp_path / "a.wav"
        write_wav(path, clip)
        loaded = read_wav(path)
        assert loaded.rate == 16000
        assert np.array_equal(loaded.samples, clip.samples)

    def test_round_trip_error_bounded_by_quantisation(self, tmp_path):
        rng = np.random.default_rng(1)
        clip = AudioClip(samples=rng.uniform(-1, 1, 500), rate=8000)
        path = tmp_path / "a.wav"
        write_wav(path, clip)
        loaded = read_wav(path)
        assert np.abs(loaded.samples - clip.samples).max() <= 0.5 / 32767.0

    def test_stereo_downmixes_by_mean(self, tmp_path):
        import wave

        left = np.array([16384, -16384, 0], dtype="<i2")
        right = np.array([0, -16384, 32000], dtype="<i2")
        interleaved = np.empty(6, dtype="<i2")
        interleaved[0::2] = left
        interleaved[1::2] = right
        path = tmp_path / "stereo.wav"
        with wave.open(str(path), "wb") as handle:
            handle.setnchannels(2)
            handle.setsampwidth(2)
            handle.setframerate(44100)
            handle.writeframes(interleaved.tobytes())
        loaded = read_wav(path)
        want = (left.astype(float) + right.astype(float)) / 2.0 / 32767.0
        assert loaded.rate == 44100
        assert np.allclose(loaded.samples, want)

    def test_rejects_non_pcm16_width(self, tmp_path):
        import wave

        path = tmp_path / "w8.wav"
        with wave.open(str(path), "wb") as handle:
            handle.setnchannels(1)
            handle.setsampwidth(1)
            handle.setframerate(8000)
            handle.writeframes(bytes(16))
        with pytest.raises(FormatError):
            read_wav(path)

    def test_rejects_non_wav_bytes(self, tmp_path):
        path = tmp_path / "junk.wav"
        path.write_bytes(b"not a wav at all")
        with pytest.raises(FormatError):
            read_wav(path)


class TestFrames:
    def test_png_round_trip_exact_on_8bit_grid(self, tmp_path):
        rng = np.random.default_rng(2)
        frame = np.round(rng.uniform(0, 1, (32, 24)) * 255.0) / 255.0
        path = tmp_path / "f.png"
        write_frame(path, frame)
        assert np.array_equal(read_frame(path), frame)

    def test_pgm_round_trip(self, tmp_path):
        frame = np.linspace(0, 1, 64).reshape(8, 8)
        path = tmp_path / "f.pgm"
        write_frame(path, frame)
        loaded = read_frame(path)
        assert np.abs(loaded - frame).max() <= 0.5 / 255.0

    def test_values_clip_to_unit_interval(self, tmp_path):
        frame = np.array([[-0.5, 0.0], [1.0, 2.0]])
        path = tmp_path / "f.png"
        write_frame(path, frame)
        loaded = read_frame(path)
        assert loaded[0, 0] == 0.0
        assert loaded[1, 1] == 1.0

    def test_rejects_non_image_bytes(self, tmp_path):
        path = tmp_path / "f.png"
        path.write_bytes(b"png? no")
        with pytest.raises(FormatError):
            read_frame(path)

    def test_dir_round_trip_keeps_order(self, tmp_path):
        rng = np.random.default_rng(3)
        frames = np.round(rng.uniform(0, 1, (12, 16, 16)) * 255.0) / 255.0
        directory = tmp_path / "frames"
        write_frames_dir(directory, frames)
        assert np.array_equal(read_frames_dir(directory), frames)

    def test_dir_reads_lexicographically(self, tmp_path):
        directory = tmp_path / "frames"
        directory.mkdir()
        write_frame(directory / "b.png", np.full((4, 4), 1.0))
        write_frame(directory / "a.png", np.zeros((4, 4)))
        stack = read_frames_dir(directory)
        assert stack[0].max() == 0.0
        assert stack[1].min() == 1.0

    def test_dir_rejects_mixed_shapes(self, tmp_path):
        directory = tmp_path / "frames"
        directory.mkdir()
        write_frame(directory / "a.png", np.zeros((4, 4)))
        write_frame(directory / "b.png", np.zeros((8, 8)))
        with pytest.raises(FormatError):
            read_frames_dir(directory)

    def test_empty_dir_rejected(self, tmp_path):
        directory = tmp_path / "frames"
        directory.mkdir()
        with pytest.raises(FormatError):
            read_frames_dir(directory)

    def test_missing_dir_rejected(self, tmp_path):
        with pytest.raises(FormatError):
            read_frames_dir(tmp_path / "nope")


class TestFlo:
    def test_file_round_trip_byte_identical(self, tmp_path):
        rng = np.random.default_rng(4)
        flow = FlowField(u=rng.standard_normal((6, 5)), v=rng.standard_normal((6, 5)))
        first = tmp_path / "a.flo"
        second = tmp_path / "b.flo"
        write_flo_file(first, flow)
        write_flo_file(second, read_flo_file(first))
        assert first.read_bytes() == second.read_bytes()

    def test_dir_round_trip_in_order(self, tmp_path):
        rng = np.random.default_rng(5)
        flows = [
            FlowField(u=rng.standard_normal((4, 4)), v=rng.standard_normal((4, 4)))
            for _ in range(3)
        ]
        directory = tmp_path / "flows"
        for index, flow in enumerate(flows):
            write_flo_file(directory / f"flow_{index:05d}.flo", flow)
        loaded = read_flo_dir(directory)
        assert len(loaded) == 3
        for got, want in zip(loaded, flows):
            assert np.allclose(got.u, want.u, atol=1e-6)
            assert np.allclose(got.v, want.v, atol=1e-6)

    def test_truncated_file_rejected(self, tmp_path):
        path = tmp_path / "bad.flo"
        path.write_bytes(b"PIEH\x02\x00\x00\x00")
        with pytest.raises(FormatError):
            read_flo_file(path)


class TestEnvelopeCsv:
    def test_round_trip_exact(self, tmp_path):
        values = np.array([0.0, 1.5, 0.3333333333333333, 7.0])
        env = OnsetEnvelope(values=values, frame_rate=31.25)
        path = tmp_path / "env.csv"
        write_envelope_csv(path, env)
        assert np.array_equal(read_envelope_csv(path), values)

    def test_header_present(self, tmp_path):
        env = OnsetEnvelope(values=np.array([1.0]), frame_rate=10.0)
        path = tmp_path / "env.csv"
        write_envelope_csv(path, env)
        assert path.read_text().splitlines()[0] == "frame_index,value"

    def test_missing_header_rejected(self, tmp_path):
        path = tmp_path / "env.csv"
        path.write_text("0,1.0\n")
        with pytest.raises(FormatError):
            read_envelope_csv(path)

    def test_non_numeric_value_rejected(self, tmp_path):
        path = tmp_path / "env.csv"
        path.write_text("frame_index,value\n0,spam\n")
        with pytest.raises(FormatError):
            read_envelope_csv(path)


class TestJson:
    def test_round_trip_lossless(self, tmp_path):
        record = {"b": [1, 2.5, "x"], "a": {"nested": None, "t": True}}
        path = tmp_path / "r.json"
        write_json_file(path, record)
        assert read_json_file(path) == record

    def test_output_stable_under_key_order(self, tmp_path):
        first = tmp_path / "a.json"
        second = tmp_path / "b.json"
        write_json_file(first, {"x": 1, "y": 2})
        write_json_file(second, {"y": 2, "x": 1})
        assert first.read_bytes() == second.read_bytes()

    def test_bad_json_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{nope")
        with pytest.raises(FormatError):
            read_json_file(path)

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(FormatError):
            read_json_file(tmp_path / "absent.json")
