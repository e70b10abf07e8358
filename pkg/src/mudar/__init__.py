"""mudar: music and dance rhythm analysis, alignment, and retargeting."""

from .audio_rhythm import estimate_tempo, music_rhythm, onset_envelope, pick_peaks, stft
from .config import ENV_CONFIG_VAR, Config, config_json, load_config, merge_config
from .datatypes import (
    AudioClip,
    FeatureSeq,
    OnsetEnvelope,
    OnsetParams,
    PeakPickParams,
    RhythmTrack,
    Spectrogram,
    StftParams,
    TempoEstimate,
)
from .errors import (
    ConfigError,
    DegenerateLabelsError,
    EmptyTrackError,
    FormatError,
    InputTooShortError,
    InsufficientRhythmError,
    InvalidInputError,
    InvalidPathError,
    MudarError,
    NoValidNegativeError,
    NoValidShiftError,
    NumericError,
)
from .estimators import (
    MusicRhythmDetector,
    VisualRhythmClassifier,
    VisualRhythmDetector,
    classifier_features,
    load_rhythm_classifier,
    save_rhythm_classifier,
)
from .fileio import (
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
    write_wav,
)
from .gradcheck import GRAD_TARGETS, gradient_suite
from .motion_rhythm import (
    FlowField,
    FlowParams,
    HoofParams,
    RhythmClassifierParams,
    classifier_loss_and_grads,
    classifier_rhythm_track,
    estimate_flow,
    first_order_diff,
    flow_sequence,
    hoof,
    hoof_sequence,
    horn_schunck,
    init_rhythm_classifier_params,
    make_frame_labels,
    motion_features,
    read_flo,
    rgb_features,
    train_rhythm_classifier,
    train_rhythm_classifier_batch,
    visual_rhythm_classifier,
    visual_rhythm_heuristic,
    write_flo,
)
from .neural_blocks import (
    AgvaWeights,
    AttnWeights,
    FocalParams,
    InjectorParams,
    JointLossParams,
    LinearParams,
    TripletParams,
    agva,
    agva_backward,
    audio_dropout_split,
    focal_loss,
    focal_loss_grad,
    grad_check,
    joint_loss,
    rgb_injector,
    self_attention,
    self_attention_backward,
    triplet_loss,
    triplet_loss_grads,
)
from .pair_sampling import (
    PairSample,
    SamplingParams,
    admit_negative,
    beat_unit_frames,
    curriculum_task,
    make_avc_pair,
    make_avts_pair,
    pair_manifest_dumps,
    pair_manifest_loads,
    rhythm_similarity_score,
    valid_shifts,
)
from .retarget import (
    RetargetPlan,
    RetrievalParams,
    WarpPath,
    accelerate_align,
    apply_plan,
    dtw_align,
    hybrid_similarity,
    plan_alignment_error,
    plan_from_path,
    retrieve_topk,
    rhythm_match_f1,
    rhythm_sim_matrix,
    shift_align,
)
from .synthetic import (
    MOTION_PATTERNS,
    SyntheticClip,
    SyntheticSpec,
    beat_times,
    click_track,
    gen_synthetic,
    synthesize,
)

__version__ = "0.1.0"
