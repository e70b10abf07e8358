"""Command-line entry point.

Subcommands cover the full pipeline: audio onset detection, optical flow,
flow histograms, visual rhythm (heuristic or learned), classifier
training, pair-sample manifests, retiming, retrieval, synthetic data, and
gradient verification. Settings resolve as defaults, then a JSON config
file (--config or $MUDAR_CONFIG), then flags; exit code 1 means a usage or
configuration problem, 2 a data or format problem.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .audio_rhythm import music_rhythm
from .config import Config, config_json, load_config, merge_config
from .datatypes import RhythmTrack, TempoEstimate
from .errors import ConfigError, FormatError, MudarError
from .estimators import (
    VisualRhythmClassifier,
    load_rhythm_classifier,
    save_rhythm_classifier,
)
from .fileio import (
    atomic_path,
    read_frames_dir,
    read_flo_dir,
    read_json_file,
    read_wav,
    write_envelope_csv,
    write_flo_file,
    write_frames_dir,
    write_json_file,
    write_text,
)
from .gradcheck import GRAD_TARGETS, gradient_suite
from .motion_rhythm import (
    first_order_diff,
    flow_sequence,
    motion_features,
    visual_rhythm_heuristic,
)
from .pair_sampling import (
    curriculum_task,
    make_avc_pair,
    make_avts_pair,
    pair_manifest_dumps,
)
from .retarget import (
    accelerate_align,
    apply_plan,
    dtw_align,
    hybrid_similarity,
    plan_alignment_error,
    plan_from_path,
    retrieve_topk,
    rhythm_sim_matrix,
    shift_align,
)
from .synthetic import SyntheticSpec, beat_times, gen_synthetic


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad flags; this toolkit reserves 2 for
    # data errors, so route parse failures through the usual error path.
    def error(self, message):
        raise _UsageError(message)


# flag destination -> (config section, key); flags default to None so only
# the ones actually given override the config.
_OVERRIDES = {
    "window_size": ("stft", "window_size"),
    "hop": ("stft", "hop"),
    "lag": ("onset", "lag"),
    "max_filter_bins": ("onset", "max_filter_bins"),
    "pre_max": ("pick", "pre_max"),
    "post_max": ("pick", "post_max"),
    "pre_avg": ("pick", "pre_avg"),
    "post_avg": ("pick", "post_avg"),
    "delta": ("pick", "delta"),
    "wait": ("pick", "wait"),
    "smoothness": ("flow", "smoothness"),
    "iterations": ("flow", "iterations"),
    "pyramid_levels": ("flow", "pyramid_levels"),
    "bins": ("hoof", "bins"),
    "normalize": ("hoof", "normalize"),
    "alpha_t": ("focal", "alpha_t"),
    "gamma": ("focal", "gamma"),
    "alpha": ("sampling", "alpha"),
    "lambda3": ("retrieval", "lambda3"),
    "match_tolerance": ("retrieval", "match_tolerance"),
    "top_k": ("retrieval", "top_k"),
    "fps": ("synthetic", "fps"),
    "bpm": ("synthetic", "bpm"),
    "clip_seconds": ("synthetic", "clip_seconds"),
    "sample_rate": ("synthetic", "sample_rate"),
    "pattern": ("synthetic", "motion_pattern"),
    "jitter_frames": ("synthetic", "jitter_frames"),
}


def _apply_overrides(cfg: Config, args: argparse.Namespace) -> Config:
    data: dict = {}
    for dest, (section, key) in _OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is not None:
            data.setdefault(section, {})[key] = value
    shift_min = getattr(args, "shift_min", None)
    shift_max = getattr(args, "shift_max", None)
    if shift_min is not None or shift_max is not None:
        lo, hi = cfg.sampling.shift_range
        data.setdefault("sampling", {})["shift_range"] = [
            shift_min if shift_min is not None else lo,
            shift_max if shift_max is not None else hi,
        ]
    seed = getattr(args, "seed", None)
    if seed is not None:
        data["seed"] = seed
        data.setdefault("synthetic", {})["seed"] = seed
        data.setdefault("sampling", {})["seed"] = seed
    out_dir = getattr(args, "out_dir", None)
    if out_dir is not None:
        data["out_dir"] = out_dir
    return merge_config(cfg, data) if data else cfg


def _add_seed_flag(p) -> None:
    p.add_argument("--seed", type=int, help="seed for every stochastic stage")


def _add_stft_flags(p) -> None:
    p.add_argument("--window-size", type=int, dest="window_size")
    p.add_argument("--hop", type=int)
    p.add_argument("--lag", type=int)
    p.add_argument("--max-filter-bins", type=int, dest="max_filter_bins")


def _add_pick_flags(p) -> None:
    p.add_argument("--pre-max", type=int, dest="pre_max")
    p.add_argument("--post-max", type=int, dest="post_max")
    p.add_argument("--pre-avg", type=int, dest="pre_avg")
    p.add_argument("--post-avg", type=int, dest="post_avg")
    p.add_argument("--delta", type=float, help="fixed peak threshold (default: adaptive)")
    p.add_argument("--wait", type=int)


def _add_flow_flags(p) -> None:
    p.add_argument("--smoothness", type=float)
    p.add_argument("--iterations", type=int)
    p.add_argument("--pyramid-levels", type=int, dest="pyramid_levels")


def _add_hoof_flags(p) -> None:
    p.add_argument("--bins", type=int)
    p.add_argument(
        "--normalize",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="normalize flow histograms (--no-normalize for raw mass)",
    )


def _add_fps_flag(p) -> None:
    p.add_argument("--fps", type=float, help="video frame rate")


def build_parser() -> _Parser:
    parser = _Parser(prog="mudar", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON config file (also $MUDAR_CONFIG)")
    parser.add_argument(
        "--print-config",
        action="store_true",
        help="print the effective merged config and exit",
    )
    parser.add_argument("--out-dir", dest="out_dir", help="directory for artifacts")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("onset", parents=[], help="audio onsets, keypoints, and tempo")
    p.add_argument("audio", help="PCM16 WAV file")
    p.add_argument("--stem", help="output file stem (default: input stem)")
    _add_stft_flags(p)
    _add_pick_flags(p)
    p.set_defaults(func=cmd_onset)

    p = sub.add_parser("flow", help="dense optical flow for a frame directory")
    p.add_argument("frames_dir")
    p.add_argument("--out", help="output directory for .flo files")
    _add_flow_flags(p)
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("hoof", help="flow-orientation histogram features")
    p.add_argument("flo_dir", help="directory of .flo files")
    p.add_argument("--out", help="output CSV path")
    _add_hoof_flags(p)
    _add_fps_flag(p)
    p.set_defaults(func=cmd_hoof)

    p = sub.add_parser("vrhythm", help="visual rhythm keypoints for a clip")
    p.add_argument("frames_dir", nargs="?", help="directory of grayscale frames")
    p.add_argument("--flo-dir", dest="flo_dir", help="precomputed flow directory")
    p.add_argument(
        "--audio",
        help="companion audio (accepted for symmetry; rhythm comes from frames alone)",
    )
    p.add_argument("--weights", help="trained classifier weights (default: heuristic)")
    p.add_argument("--out", help="output rhythm JSON path")
    p.add_argument("--threshold", type=float, help="classifier probability gate")
    _add_flow_flags(p)
    _add_hoof_flags(p)
    _add_pick_flags(p)
    _add_fps_flag(p)
    p.set_defaults(func=cmd_vrhythm)

    p = sub.add_parser(
        "train-vrhythm", help="train the keypoint classifier on an A/V corpus"
    )
    p.add_argument("corpus_dir", help="directory of clip dirs (audio.wav + frames/)")
    p.add_argument("--weights-out", dest="weights_out", help="output weights JSON")
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--hidden-mot", type=int, dest="hidden_mot", default=16)
    p.add_argument("--hidden-inj", type=int, dest="hidden_inj", default=16)
    p.add_argument("--dilate", type=int, default=1)
    p.add_argument("--threshold", type=float, default=0.5)
    _add_flow_flags(p)
    _add_hoof_flags(p)
    _add_fps_flag(p)
    _add_seed_flag(p)
    p.set_defaults(func=cmd_train_vrhythm)

    p = sub.add_parser("pairgen", help="sample a training-pair manifest")
    p.add_argument("tracks_dir", help="directory of rhythm-track JSON files")
    p.add_argument("--out", help="output JSONL manifest path")
    p.add_argument("--count", type=int, help="samples to draw (default: one per clip)")
    p.add_argument("--task", choices=("avc", "avts", "auto"), default="avc")
    p.add_argument("--epoch", type=int, default=0, help="epoch for --task auto")
    p.add_argument("--switch-epoch", type=int, dest="switch_epoch", default=35)
    p.add_argument("--alpha", type=float, help="negative-gate threshold")
    p.add_argument("--shift-min", type=int, dest="shift_min")
    p.add_argument("--shift-max", type=int, dest="shift_max")
    p.add_argument("--bpm", type=float, help="tempo for the half-beat exclusion")
    _add_seed_flag(p)
    p.set_defaults(func=cmd_pairgen)

    p = sub.add_parser("retarget", help="retime a clip's frames to an audio rhythm")
    p.add_argument("audio", help="PCM16 WAV file")
    p.add_argument("frames_dir", help="directory of grayscale frames")
    p.add_argument("--mode", choices=("shift", "accelerate", "dtw"), default="dtw")
    p.add_argument("--out", help="output plan JSON path")
    p.add_argument("--execute", help="directory for the retimed frames")
    p.add_argument(
        "--nearest",
        action="store_true",
        help="snap fractional sources to the closest frame instead of blending",
    )
    _add_stft_flags(p)
    _add_flow_flags(p)
    _add_hoof_flags(p)
    _add_pick_flags(p)
    _add_fps_flag(p)
    p.set_defaults(func=cmd_retarget)

    p = sub.add_parser("retrieve", help="rank a track database against query audio")
    p.add_argument("audio", help="query WAV file")
    p.add_argument("manifest", help="database manifest JSON")
    p.add_argument("--query-embedding", dest="query_embedding",
                   help="JSON file with the query's embedding vector")
    p.add_argument("--out", help="output ranking JSON path")
    p.add_argument("--lambda3", type=float, help="embedding weight in [0, 1]")
    p.add_argument("--match-tolerance", type=int, dest="match_tolerance")
    p.add_argument("--top-k", type=int, dest="top_k")
    _add_stft_flags(p)
    _add_pick_flags(p)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("gen-synthetic", help="write seeded audio/video test clips")
    p.add_argument("out_path", help="output directory")
    p.add_argument("--clips", type=int, default=1)
    p.add_argument("--bpm", type=float)
    p.add_argument("--clip-seconds", type=float, dest="clip_seconds")
    p.add_argument("--sample-rate", type=int, dest="sample_rate")
    p.add_argument("--pattern", choices=("bounce", "orbit"))
    p.add_argument("--jitter-frames", type=int, dest="jitter_frames")
    _add_fps_flag(p)
    _add_seed_flag(p)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("grad-check", help="verify analytic gradients numerically")
    p.add_argument("--points", type=int, default=10)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument(
        "--targets",
        help=f"comma-separated subset of {', '.join(GRAD_TARGETS)}",
    )
    _add_seed_flag(p)
    p.set_defaults(func=cmd_grad_check)

    return parser


def _resolve_out_dir(cfg: Config) -> Path:
    return Path(cfg.out_dir)


def _video_fps(cfg: Config) -> float:
    # the synthetic section doubles as the corpus convention for frame rate
    return cfg.synthetic.fps


def cmd_onset(args, cfg: Config) -> int:
    clip = read_wav(args.audio)
    env, track, tempo = music_rhythm(
        clip, stft_params=cfg.stft, onset_params=cfg.onset, pick_params=cfg.pick
    )
    out_dir = _resolve_out_dir(cfg)
    stem = args.stem or Path(args.audio).stem
    env_path = out_dir / f"{stem}.envelope.csv"
    track_path = out_dir / f"{stem}.rhythm.json"
    write_envelope_csv(env_path, env)
    write_json_file(track_path, track.to_dict())
    print(
        f"keypoints={track.n_keypoints} tempo_bpm={tempo.bpm:.2f} "
        f"confidence={tempo.confidence:.3f} envelope_frames={env.n_frames} "
        f"rhythm={track_path}"
    )
    return 0


def cmd_flow(args, cfg: Config) -> int:
    frames = read_frames_dir(args.frames_dir)
    flows = flow_sequence(frames, **cfg.flow.kwargs())
    out_dir = Path(args.out) if args.out else _resolve_out_dir(cfg) / "flows"
    for index, flow in enumerate(flows):
        write_flo_file(out_dir / f"flow_{index:05d}.flo", flow)
    mean_mag = float(np.mean([f.magnitude().mean() for f in flows]))
    print(f"flows={len(flows)} mean_magnitude={mean_mag:.4f} out={out_dir}")
    return 0


def cmd_hoof(args, cfg: Config) -> int:
    flows = read_flo_dir(args.flo_dir)
    feats = motion_features(flows, _video_fps(cfg), cfg.hoof)
    out_path = Path(args.out) if args.out else _resolve_out_dir(cfg) / "hoof.csv"
    header = ["frame_index"] + [f"bin_{b}" for b in range(cfg.hoof.bins)] + ["magnitude"]
    with atomic_path(out_path) as tmp:
        with open(tmp, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            for index, row in enumerate(feats.data):
                writer.writerow([index] + [repr(float(v)) for v in row])
    print(f"rows={feats.n_frames} bins={cfg.hoof.bins} out={out_path}")
    return 0


def _heuristic_track(args, cfg: Config) -> RhythmTrack:
    fps = _video_fps(cfg)
    if args.flo_dir:
        flows = read_flo_dir(args.flo_dir)
    else:
        frames = read_frames_dir(args.frames_dir)
        flows = flow_sequence(frames, **cfg.flow.kwargs())
    mot_diff = first_order_diff(motion_features(flows, fps, cfg.hoof))
    return visual_rhythm_heuristic(mot_diff, cfg.pick)


def cmd_vrhythm(args, cfg: Config) -> int:
    if (args.frames_dir is None) == (args.flo_dir is None):
        raise ConfigError("give a frames directory or --flo-dir (not both)")
    if args.weights:
        if args.frames_dir is None:
            raise ConfigError("the classifier needs image frames, not --flo-dir")
        clf = load_rhythm_classifier(args.weights)
        if args.fps is not None:
            clf.fps = args.fps
        if args.threshold is not None:
            clf.threshold = args.threshold
        track = clf.predict(read_frames_dir(args.frames_dir))
        source = "classifier"
    else:
        track = _heuristic_track(args, cfg)
        source = "heuristic"
    name = Path(args.frames_dir or args.flo_dir).name or "clip"
    out_path = Path(args.out) if args.out else _resolve_out_dir(cfg) / f"{name}.rhythm.json"
    write_json_file(out_path, track.to_dict())
    print(
        f"keypoints={track.n_keypoints} frames={track.length_frames} "
        f"source={source} out={out_path}"
    )
    return 0


def _corpus_clip_dirs(corpus_dir) -> list:
    corpus = Path(corpus_dir)
    if not corpus.is_dir():
        raise FormatError(f"{corpus}: not a directory")
    dirs = sorted(
        d for d in corpus.iterdir()
        if d.is_dir() and (d / "audio.wav").is_file() and (d / "frames").is_dir()
    )
    if not dirs:
        raise FormatError(f"{corpus}: no clip directories with audio.wav and frames/")
    return dirs


def _audio_label_frames(clip, cfg: Config, fps: float, n_frames: int) -> tuple:
    """Onset keypoints of an audio clip, mapped onto the video frame grid."""
    env, track, _ = music_rhythm(
        clip, stft_params=cfg.stft, onset_params=cfg.onset, pick_params=cfg.pick
    )
    frames = np.floor(np.asarray(track.keypoints) / env.frame_rate * fps + 0.5)
    frames = np.unique(np.clip(frames.astype(np.int64), 0, n_frames - 1))
    return tuple(int(f) for f in frames)


def cmd_train_vrhythm(args, cfg: Config) -> int:
    fps = _video_fps(cfg)
    stacks, labels = [], []
    for clip_dir in _corpus_clip_dirs(args.corpus_dir):
        frames = read_frames_dir(clip_dir / "frames")
        audio = read_wav(clip_dir / "audio.wav")
        stacks.append(frames)
        labels.append(_audio_label_frames(audio, cfg, fps, frames.shape[0]))
    clf = VisualRhythmClassifier(
        fps=fps,
        bins=cfg.hoof.bins,
        normalize=cfg.hoof.normalize,
        smoothness=cfg.flow.smoothness,
        iterations=cfg.flow.iterations,
        pyramid_levels=cfg.flow.pyramid_levels,
        hidden_mot=args.hidden_mot,
        hidden_inj=args.hidden_inj,
        lr=args.lr,
        epochs=args.epochs,
        seed=cfg.seed,
        dilate=args.dilate,
        alpha_t=cfg.focal.alpha_t,
        gamma=cfg.focal.gamma,
        threshold=args.threshold,
        pre_max=cfg.pick.pre_max,
        post_max=cfg.pick.post_max,
        pre_avg=cfg.pick.pre_avg,
        post_avg=cfg.pick.post_avg,
        delta=cfg.pick.delta,
        wait=cfg.pick.wait,
    )
    clf.fit(stacks, labels)
    out_path = (
        Path(args.weights_out)
        if args.weights_out
        else _resolve_out_dir(cfg) / "vrhythm_weights.json"
    )
    save_rhythm_classifier(out_path, clf)
    print(
        f"clips={len(stacks)} loss_first={clf.trace_[0]:.4f} "
        f"loss_final={clf.trace_[-1]:.4f} weights={out_path}"
    )
    return 0


def _load_track_table(tracks_dir) -> dict:
    directory = Path(tracks_dir)
    if not directory.is_dir():
        raise FormatError(f"{directory}: not a directory")
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() == ".json")
    if not files:
        raise FormatError(f"{directory}: no rhythm JSON files found")
    return {p.stem: RhythmTrack.from_dict(read_json_file(p)) for p in files}


def cmd_pairgen(args, cfg: Config) -> int:
    table = _load_track_table(args.tracks_dir)
    ids = sorted(table)
    task = args.task
    if task == "auto":
        task = curriculum_task(args.epoch, args.switch_epoch)
    count = args.count if args.count is not None else len(ids)
    if count < 1:
        raise ConfigError(f"--count must be >= 1, got {count}")
    params = cfg.sampling
    samples = []
    if task == "avc":
        for k in range(count):
            vid = ids[k % len(ids)]
            samples.append(
                make_avc_pair(
                    table, vid, replace(params, seed=params.seed + k),
                    positive=(k % 2 == 0),
                )
            )
    else:
        tempo = TempoEstimate(bpm=cfg.synthetic.bpm, confidence=1.0)
        for k in range(count):
            vid = ids[k % len(ids)]
            track = table[vid]
            samples.append(
                make_avts_pair(
                    track, track.fps, tempo, replace(params, seed=params.seed + k),
                    clip_id=vid, sync=(k % 2 == 0),
                )
            )
    out_path = Path(args.out) if args.out else _resolve_out_dir(cfg) / "pairs.jsonl"
    write_text(out_path, pair_manifest_dumps(samples))
    print(f"samples={len(samples)} task={task} out={out_path}")
    return 0


def cmd_retarget(args, cfg: Config) -> int:
    audio = read_wav(args.audio)
    _, a_track, _ = music_rhythm(
        audio, stft_params=cfg.stft, onset_params=cfg.onset, pick_params=cfg.pick
    )
    frames = read_frames_dir(args.frames_dir)
    fps = _video_fps(cfg)
    flows = flow_sequence(frames, **cfg.flow.kwargs())
    mot_diff = first_order_diff(motion_features(flows, fps, cfg.hoof))
    v_track = visual_rhythm_heuristic(mot_diff, cfg.pick)
    if args.mode == "shift":
        plan = shift_align(a_track, v_track)
    elif args.mode == "accelerate":
        plan = accelerate_align(a_track, v_track)
    else:
        plan = plan_from_path(dtw_align(a_track, v_track), a_track, v_track, fps)
    error = plan_alignment_error(plan, a_track, v_track)
    out_path = Path(args.out) if args.out else _resolve_out_dir(cfg) / "plan.json"
    write_json_file(out_path, plan.to_dict())
    extra = ""
    if args.execute:
        rendered = apply_plan(frames, plan, nearest=args.nearest)
        write_frames_dir(args.execute, rendered)
        extra = f" rendered={args.execute}"
    print(
        f"mode={plan.mode} frames_out={plan.n_frames} "
        f"audio_keypoints={a_track.n_keypoints} visual_keypoints={v_track.n_keypoints} "
        f"alignment_error_frames={error:.3f} plan={out_path}{extra}"
    )
    return 0


def _unit_cosine_sim(query: np.ndarray, vector, where: str) -> float:
    v = np.asarray(vector, dtype=np.float64)
    if v.ndim != 1 or v.shape != query.shape:
        raise FormatError(f"{where}: embedding must be a length-{query.size} vector")
    norm = float(np.linalg.norm(v))
    if norm == 0.0 or not np.isfinite(norm):
        raise FormatError(f"{where}: embedding has no usable norm")
    cos = float(query @ v) / (float(np.linalg.norm(query)) * norm)
    return (1.0 + cos) / 2.0


def _load_manifest_items(manifest_path) -> list:
    record = read_json_file(manifest_path)
    if not isinstance(record, dict) or not isinstance(record.get("items"), list):
        raise FormatError(f"{manifest_path}: manifest needs an 'items' list")
    if not record["items"]:
        raise FormatError(f"{manifest_path}: manifest has no items")
    base = Path(manifest_path).parent
    items = []
    for position, entry in enumerate(record["items"]):
        if not isinstance(entry, dict) or "rhythm" not in entry:
            raise FormatError(f"{manifest_path}: item {position} needs a 'rhythm' path")
        track = RhythmTrack.from_dict(read_json_file(base / entry["rhythm"]))
        items.append(
            {
                "id": entry.get("id", Path(entry["rhythm"]).stem),
                "track": track,
                "embedding": entry.get("embedding"),
            }
        )
    return items


def cmd_retrieve(args, cfg: Config) -> int:
    items = _load_manifest_items(args.manifest)
    lambda3 = cfg.retrieval.lambda3
    with_embedding = [it for it in items if it["embedding"] is not None]
    if with_embedding and len(with_embedding) != len(items):
        raise FormatError("manifest mixes items with and without embeddings")
    if not with_embedding:
        if lambda3 >= 1.0:
            raise ConfigError(
                "lambda3=1 scores by embeddings only, but the manifest has none"
            )
        lambda3 = 0.0
    if lambda3 > 0.0 and args.query_embedding is None:
        raise ConfigError("lambda3 > 0 with embeddings needs --query-embedding")

    audio = read_wav(args.audio)
    _, a_track, _ = music_rhythm(
        audio, stft_params=cfg.stft, onset_params=cfg.onset, pick_params=cfg.pick
    )
    tracks = [it["track"] for it in items]
    db_fps = tracks[0].fps
    query = a_track.resampled(db_fps)
    s_r = rhythm_sim_matrix([query], tracks, cfg.retrieval.match_tolerance)

    if lambda3 > 0.0:
        q_vec = np.asarray(read_json_file(args.query_embedding), dtype=np.float64)
        if q_vec.ndim != 1 or q_vec.size == 0 or float(np.linalg.norm(q_vec)) == 0.0:
            raise FormatError(f"{args.query_embedding}: not a usable embedding vector")
        s_e = np.array(
            [[
                _unit_cosine_sim(q_vec, it["embedding"], f"item {it['id']}")
                for it in items
            ]]
        )
    else:
        s_e = np.zeros_like(s_r)

    k = cfg.retrieval.top_k
    if k > len(items):
        raise ConfigError(f"top_k={k} exceeds the {len(items)}-item database")
    scores = hybrid_similarity(s_e, s_r, replace(cfg.retrieval, lambda3=lambda3))
    ranked = retrieve_topk(scores, k)[0]
    results = []
    for rank, index in enumerate(ranked, start=1):
        i = int(index)
        results.append(
            {
                "rank": rank,
                "id": items[i]["id"],
                "score": float(scores[0, i]),
                "rhythm_score": float(s_r[0, i]),
                "embedding_score": float(s_e[0, i]) if lambda3 > 0.0 else None,
            }
        )
    record = {
        "lambda3": lambda3,
        "match_tolerance": cfg.retrieval.match_tolerance,
        "results": results,
    }
    if args.out:
        write_json_file(args.out, record)
    top = results[0]
    print(f"top1={top['id']} score={top['score']:.4f} k={k} lambda3={lambda3}")
    for row in results:
        print(f"  rank={row['rank']} id={row['id']} score={row['score']:.4f}")
    return 0


def cmd_gen_synthetic(args, cfg: Config) -> int:
    spec = cfg.synthetic
    if args.clips < 1:
        raise ConfigError(f"--clips must be >= 1, got {args.clips}")
    out_root = Path(args.out_path)
    if args.clips == 1:
        gen_synthetic(spec, out_root)
    else:
        for index in range(args.clips):
            gen_synthetic(
                replace(spec, seed=spec.seed + index), out_root / f"clip_{index:03d}"
            )
    print(
        f"clips={args.clips} frames_per_clip={spec.n_frames} "
        f"events_per_clip={beat_times(spec).size} pattern={spec.motion_pattern} "
        f"out={out_root}"
    )
    return 0


def cmd_grad_check(args, cfg: Config) -> int:
    targets = None
    if args.targets:
        targets = tuple(t.strip() for t in args.targets.split(",") if t.strip())
    try:
        results = gradient_suite(
            points=args.points, step=args.step, seed=cfg.seed, targets=targets
        )
    except MudarError as exc:
        raise ConfigError(str(exc)) from None
    worst = 0.0
    for name, err in results.items():
        worst = max(worst, err)
        status = "ok" if err <= args.tolerance else "FAIL"
        print(f"{name}: max_rel_err={err:.3e} {status}")
    if worst > args.tolerance:
        print(f"gradient check failed: {worst:.3e} > {args.tolerance:.1e}",
              file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        cfg = load_config(getattr(args, "config", None))
        cfg = _apply_overrides(cfg, args)
        if args.print_config:
            print(config_json(cfg))
            return 0
        if getattr(args, "command", None) is None:
            print("usage error: no command given (see --help)", file=sys.stderr)
            return 1
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except MudarError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
