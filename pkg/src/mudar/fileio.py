"""Disk codecs for the artifacts the toolkit consumes and emits.

WAV (PCM16 little-endian), grayscale frame images (PNG or PGM),
Middlebury .flo flow files, onset-envelope CSVs, and JSON records. Every
writer goes through a temp-file-plus-rename so readers never observe a
partial artifact.
"""

from __future__ import annotations

import csv
import json
import os
import wave
from contextlib import contextmanager
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .datatypes import AudioClip, OnsetEnvelope
from .errors import FormatError
from .motion_rhythm import FlowField, read_flo, write_flo
from .validation import as_float_array, check_finite

FRAME_SUFFIXES = (".png", ".pgm")

_PCM_SCALE = 32767.0


@contextmanager
def atomic_path(path):
    """Yield a sibling temp path, renamed onto `path` on clean exit."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.parent / f".{path.name}.{os.getpid()}.tmp"
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        tmp.unlink(missing_ok=True)


def write_bytes(path, data: bytes) -> None:
    with atomic_path(path) as tmp:
        tmp.write_bytes(data)


def write_text(path, text: str) -> None:
    with atomic_path(path) as tmp:
        tmp.write_text(text, encoding="utf-8")


def read_wav(path) -> AudioClip:
    """Load a PCM16 WAV; multi-channel input is downmixed by averaging."""
    try:
        with wave.open(str(path), "rb") as handle:
            channels = handle.getnchannels()
            width = handle.getsampwidth()
            rate = handle.getframerate()
            raw = handle.readframes(handle.getnframes())
    except (wave.Error, EOFError) as exc:
        raise FormatError(f"{path}: not a readable WAV file ({exc})") from None
    if width != 2:
        raise FormatError(f"{path}: expected 16-bit PCM, got {8 * width}-bit")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / _PCM_SCALE
    if channels > 1:
        samples = samples.reshape(-1, channels).mean(axis=1)
    return AudioClip(samples=np.clip(samples, -1.0, 1.0), rate=rate)


def write_wav(path, clip: AudioClip) -> None:
    pcm = np.round(np.clip(clip.samples, -1.0, 1.0) * _PCM_SCALE).astype("<i2")
    with atomic_path(path) as tmp:
        with wave.open(str(tmp), "wb") as handle:
            handle.setnchannels(1)
            handle.setsampwidth(2)
            handle.setframerate(clip.rate)
            handle.writeframes(pcm.tobytes())


def read_frame(path) -> np.ndarray:
    """Load one image as a grayscale (H, W) array in [0, 1]."""
    try:
        with Image.open(path) as image:
            gray = np.asarray(image.convert("L"), dtype=np.float64)
    except (UnidentifiedImageError, OSError) as exc:
        raise FormatError(f"{path}: not a readable image ({exc})") from None
    return gray / 255.0


def write_frame(path, frame: np.ndarray) -> None:
    frame = as_float_array(frame, "frame", ndim=2)
    check_finite(frame, "frame")
    eight_bit = np.round(np.clip(frame, 0.0, 1.0) * 255.0).astype(np.uint8)
    suffix = Path(path).suffix.lower()
    if suffix not in FRAME_SUFFIXES:
        raise FormatError(f"unsupported frame suffix {suffix!r}, use one of {FRAME_SUFFIXES}")
    with atomic_path(path) as tmp:
        Image.fromarray(eight_bit, mode="L").save(
            tmp, format="PNG" if suffix == ".png" else "PPM"
        )


def list_frame_files(directory) -> list:
    directory = Path(directory)
    if not directory.is_dir():
        raise FormatError(f"{directory}: not a directory")
    return sorted(
        p for p in directory.iterdir() if p.suffix.lower() in FRAME_SUFFIXES
    )


def read_frames_dir(directory) -> np.ndarray:
    """Stack a directory's frames (lexicographic order) into (T, H, W)."""
    files = list_frame_files(directory)
    if not files:
        raise FormatError(f"{directory}: no {' / '.join(FRAME_SUFFIXES)} frames found")
    frames = []
    for path in files:
        frame = read_frame(path)
        if frames and frame.shape != frames[0].shape:
            raise FormatError(
                f"{path}: frame shape {frame.shape} differs from {frames[0].shape}"
            )
        frames.append(frame)
    return np.stack(frames)


def write_frames_dir(directory, frames, suffix: str = ".png") -> list:
    """Write (T, H, W) values in [0, 1] as zero-padded numbered images."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for index, frame in enumerate(frames):
        path = directory / f"frame_{index:05d}{suffix}"
        write_frame(path, frame)
        paths.append(path)
    return paths


def read_flo_file(path) -> FlowField:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"{path}: {exc}") from None
    return read_flo(data)


def write_flo_file(path, flow: FlowField) -> None:
    write_bytes(path, write_flo(flow))


def list_flo_files(directory) -> list:
    directory = Path(directory)
    if not directory.is_dir():
        raise FormatError(f"{directory}: not a directory")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() == ".flo")


def read_flo_dir(directory) -> list:
    files = list_flo_files(directory)
    if not files:
        raise FormatError(f"{directory}: no .flo files found")
    return [read_flo_file(p) for p in files]


def write_envelope_csv(path, envelope: OnsetEnvelope) -> None:
    with atomic_path(path) as tmp:
        with open(tmp, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["frame_index", "value"])
            for index, value in enumerate(envelope.values):
                writer.writerow([index, repr(float(value))])


def read_envelope_csv(path) -> np.ndarray:
    try:
        with open(path, encoding="utf-8", newline="") as handle:
            rows = list(csv.reader(handle))
    except OSError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if not rows or rows[0] != ["frame_index", "value"]:
        raise FormatError(f"{path}: missing 'frame_index,value' header")
    try:
        return np.array([float(value) for _, value in rows[1:]], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{path}: bad envelope row ({exc})") from None


def write_json_file(path, obj) -> None:
    write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json_file(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"{path}: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None
