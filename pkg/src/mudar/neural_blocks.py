"""Differentiable building blocks with hand-written analytic gradients.

Everything here is a pure float64 numpy function: the audio-guided visual
attention gate, the audio-dropout RGB injector, multi-head self-attention,
the triplet/focal/joint losses, and a central-finite-difference gradient
checker that serves as the independent oracle for every analytic gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datatypes import FeatureSeq
from .errors import FormatError, InvalidInputError, NumericError
from .validation import (
    as_float_array,
    check_finite,
    check_nonnegative,
    check_positive,
    check_positive_int,
    check_unit_interval,
)

_INIT_SCALE = 0.1


def sigmoid(x):
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def softmax(x, axis: int = -1) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def relu(x) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def clamp_probs(p, eps: float = 1e-7) -> np.ndarray:
    """Pull probabilities into the open interval required by focal_loss."""
    return np.clip(np.asarray(p, dtype=np.float64), eps, 1.0 - eps)


@dataclass(frozen=True)
class LinearParams:
    """Affine map y = x W^T + b with weight shaped (out, in)."""

    weight: np.ndarray
    bias: np.ndarray | None = None

    def __post_init__(self) -> None:
        weight = as_float_array(self.weight, "weight", ndim=2)
        check_finite(weight, "weight")
        bias = self.bias
        if bias is None:
            bias = np.zeros(weight.shape[0], dtype=np.float64)
        else:
            bias = as_float_array(bias, "bias", ndim=1)
            check_finite(bias, "bias")
            if bias.shape[0] != weight.shape[0]:
                raise InvalidInputError(
                    f"bias length {bias.shape[0]} does not match {weight.shape[0]} outputs"
                )
        object.__setattr__(self, "weight", weight)
        object.__setattr__(self, "bias", bias)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    def apply(self, x: np.ndarray) -> np.ndarray:
        return x @ self.weight.T + self.bias

    @classmethod
    def identity(cls, dim: int) -> "LinearParams":
        return cls(weight=np.eye(dim))

    @classmethod
    def seeded(cls, in_dim: int, out_dim: int, seed: int) -> "LinearParams":
        rng = np.random.default_rng(seed)
        return cls(
            weight=_INIT_SCALE * rng.standard_normal((out_dim, in_dim)),
            bias=np.zeros(out_dim),
        )


@dataclass(frozen=True)
class AgvaWeights:
    """Weights of the audio-guided spatial-channel attention gate.

    The four U maps are linear projections followed by a ReLU; w1 gates
    channels through a sigmoid, w2 scores positions through tanh + softmax.
    """

    urgbc: LinearParams
    u1c: LinearParams
    uas: LinearParams
    urgbs: LinearParams
    w1: np.ndarray
    w2: np.ndarray

    def __post_init__(self) -> None:
        w1 = as_float_array(self.w1, "w1", ndim=2)
        w2 = as_float_array(self.w2, "w2", ndim=1)
        check_finite(w1, "w1")
        check_finite(w2, "w2")
        if self.u1c.in_dim != self.urgbc.out_dim:
            raise InvalidInputError("u1c input width must match urgbc output width")
        if w1.shape != (self.urgbc.in_dim, self.u1c.out_dim):
            raise InvalidInputError(
                f"w1 must be shaped ({self.urgbc.in_dim}, {self.u1c.out_dim}), got {w1.shape}"
            )
        if self.uas.in_dim != self.urgbc.out_dim:
            raise InvalidInputError("uas input width must match the audio width")
        if self.urgbs.in_dim != self.urgbc.in_dim:
            raise InvalidInputError("urgbs input width must match the visual channel width")
        if self.urgbs.out_dim != self.uas.out_dim:
            raise InvalidInputError("urgbs and uas must share an output width")
        if w2.shape != (self.uas.out_dim,):
            raise InvalidInputError(f"w2 must have length {self.uas.out_dim}, got {w2.shape}")
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "w2", w2)

    @property
    def visual_dim(self) -> int:
        return self.urgbc.in_dim

    @property
    def audio_dim(self) -> int:
        return self.urgbc.out_dim

    @classmethod
    def seeded(cls, d: int, d_a: int, d_mid: int, d_s: int, seed: int) -> "AgvaWeights":
        rng = np.random.default_rng(seed)

        def lin(n_in, n_out):
            return LinearParams(
                weight=_INIT_SCALE * rng.standard_normal((n_out, n_in)),
                bias=np.zeros(n_out),
            )

        return cls(
            urgbc=lin(d, d_a),
            u1c=lin(d_a, d_mid),
            uas=lin(d_a, d_s),
            urgbs=lin(d, d_s),
            w1=_INIT_SCALE * rng.standard_normal((d, d_mid)),
            w2=_INIT_SCALE * rng.standard_normal(d_s),
        )

    def to_tensor_map(self) -> dict:
        arrays = {"w1": self.w1, "w2": self.w2}
        for name in ("urgbc", "u1c", "uas", "urgbs"):
            lin = getattr(self, name)
            arrays[f"{name}.weight"] = lin.weight
            arrays[f"{name}.bias"] = lin.bias
        return tensor_map(arrays)

    @classmethod
    def from_tensor_map(cls, data: dict) -> "AgvaWeights":
        arrays = arrays_from_tensor_map(data)
        try:
            return cls(
                urgbc=LinearParams(arrays["urgbc.weight"], arrays["urgbc.bias"]),
                u1c=LinearParams(arrays["u1c.weight"], arrays["u1c.bias"]),
                uas=LinearParams(arrays["uas.weight"], arrays["uas.bias"]),
                urgbs=LinearParams(arrays["urgbs.weight"], arrays["urgbs.bias"]),
                w1=arrays["w1"],
                w2=arrays["w2"],
            )
        except KeyError as exc:
            raise FormatError(f"attention weight map is missing tensor {exc}") from None


@dataclass(frozen=True)
class AttnWeights:
    """Multi-head self-attention projections, all shaped (dim, dim)."""

    heads: int
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray

    def __post_init__(self) -> None:
        check_positive_int(self.heads, "heads")
        mats = {}
        dim = None
        for name in ("wq", "wk", "wv", "wo"):
            m = as_float_array(getattr(self, name), name, ndim=2)
            check_finite(m, name)
            if m.shape[0] != m.shape[1]:
                raise InvalidInputError(f"{name} must be square, got {m.shape}")
            if dim is None:
                dim = m.shape[0]
            elif m.shape[0] != dim:
                raise InvalidInputError("projection matrices must share one dimension")
            mats[name] = m
        if dim % self.heads != 0:
            raise InvalidInputError(f"dim {dim} is not divisible by {self.heads} heads")
        for name, m in mats.items():
            object.__setattr__(self, name, m)

    @property
    def dim(self) -> int:
        return self.wq.shape[0]

    @classmethod
    def seeded(cls, dim: int, heads: int, seed: int) -> "AttnWeights":
        rng = np.random.default_rng(seed)
        mats = [_INIT_SCALE * rng.standard_normal((dim, dim)) for _ in range(4)]
        return cls(heads=heads, wq=mats[0], wk=mats[1], wv=mats[2], wo=mats[3])

    def to_tensor_map(self) -> dict:
        return tensor_map(
            {
                "heads": np.array(float(self.heads)),
                "wq": self.wq,
                "wk": self.wk,
                "wv": self.wv,
                "wo": self.wo,
            }
        )

    @classmethod
    def from_tensor_map(cls, data: dict) -> "AttnWeights":
        arrays = arrays_from_tensor_map(data)
        try:
            return cls(
                heads=int(arrays["heads"]),
                wq=arrays["wq"],
                wk=arrays["wk"],
                wv=arrays["wv"],
                wo=arrays["wo"],
            )
        except KeyError as exc:
            raise FormatError(f"attention weight map is missing tensor {exc}") from None


@dataclass(frozen=True)
class InjectorParams:
    """Audio-dropout injector: split rate, tile projection, attention block."""

    dropout_rate: float
    tile_proj: LinearParams
    attn: AttnWeights

    def __post_init__(self) -> None:
        check_unit_interval(self.dropout_rate, "dropout_rate")
        if self.tile_proj.out_dim != self.attn.dim:
            raise InvalidInputError(
                "tile projection output width must match the attention dimension"
            )


@dataclass(frozen=True)
class TripletParams:
    margin: float = 0.2

    def __post_init__(self) -> None:
        check_nonnegative(self.margin, "margin")


@dataclass(frozen=True)
class FocalParams:
    alpha_t: float = 0.25
    gamma: float = 2.0

    def __post_init__(self) -> None:
        check_unit_interval(self.alpha_t, "alpha_t")
        check_nonnegative(self.gamma, "gamma")


@dataclass(frozen=True)
class JointLossParams:
    lambda1: float = 1.0
    lambda2: float = 1.0

    def __post_init__(self) -> None:
        check_nonnegative(self.lambda1, "lambda1")
        check_nonnegative(self.lambda2, "lambda2")
        if self.lambda1 == 0.0 and self.lambda2 == 0.0:
            raise InvalidInputError("lambda1 and lambda2 cannot both be zero")


def _audio_as_array(f_a) -> tuple[np.ndarray, float]:
    if isinstance(f_a, FeatureSeq):
        return f_a.data, f_a.fps
    arr = as_float_array(f_a, "f_a", ndim=2)
    check_finite(arr, "f_a")
    return arr, 0.0


def _agva_forward(f_a: np.ndarray, f_rgb: np.ndarray, w: AgvaWeights) -> dict:
    """Run the gate and keep every intermediate needed by the backward pass."""
    n = f_rgb.shape[1]
    h_rgbc_pre = f_rgb @ w.urgbc.weight.T + w.urgbc.bias
    h_rgbc = relu(h_rgbc_pre)
    prod_c = f_a[:, None, :] * h_rgbc
    pooled = prod_c.mean(axis=1)
    h_1c_pre = pooled @ w.u1c.weight.T + w.u1c.bias
    h_1c = relu(h_1c_pre)
    logits_c = h_1c @ w.w1.T
    chan_w = sigmoid(logits_c)
    fc = chan_w[:, None, :] * f_rgb
    h_as_pre = f_a @ w.uas.weight.T + w.uas.bias
    h_as = relu(h_as_pre)
    h_rgbs_pre = fc @ w.urgbs.weight.T + w.urgbs.bias
    h_rgbs = relu(h_rgbs_pre)
    prod_s = h_as[:, None, :] * h_rgbs
    scores = np.tanh(prod_s @ w.w2)
    spat_w = softmax(scores, axis=1)
    out = (spat_w[:, :, None] * fc).sum(axis=1)
    return {
        "n": n, "h_rgbc_pre": h_rgbc_pre, "h_rgbc": h_rgbc, "pooled": pooled,
        "h_1c_pre": h_1c_pre, "h_1c": h_1c, "chan_w": chan_w, "fc": fc,
        "h_as_pre": h_as_pre, "h_as": h_as, "h_rgbs_pre": h_rgbs_pre,
        "h_rgbs": h_rgbs, "prod_s": prod_s, "scores": scores,
        "spat_w": spat_w, "out": out,
    }


def _check_agva_inputs(f_a: np.ndarray, f_rgb, w: AgvaWeights) -> np.ndarray:
    f_rgb = as_float_array(f_rgb, "f_rgb", ndim=3)
    check_finite(f_rgb, "f_rgb")
    if f_rgb.shape[0] != f_a.shape[0]:
        raise InvalidInputError(
            f"time lengths differ: f_a has {f_a.shape[0]}, f_rgb has {f_rgb.shape[0]}"
        )
    if f_rgb.shape[2] != w.visual_dim:
        raise InvalidInputError(
            f"f_rgb has {f_rgb.shape[2]} channels, weights expect {w.visual_dim}"
        )
    if f_a.shape[1] != w.audio_dim:
        raise InvalidInputError(
            f"f_a has width {f_a.shape[1]}, weights expect {w.audio_dim}"
        )
    return f_rgb


def agva(f_a, f_rgb, w: AgvaWeights, return_weights: bool = False, fps: float | None = None):
    """Audio-guided spatial-channel attention over a (t, n, d) feature map.

    Channel gate: sigmoid(w1 . U1c(avgpool_n(f_a * Urgbc(f_rgb)))), applied
    per channel. Spatial gate: softmax over positions of
    tanh(w2 . (Uas(f_a) * Urgbs(f_c))). Output is the spatially weighted sum,
    a (t, d) sequence.
    """
    f_a_arr, seq_fps = _audio_as_array(f_a)
    f_rgb = _check_agva_inputs(f_a_arr, f_rgb, w)
    cache = _agva_forward(f_a_arr, f_rgb, w)
    out_fps = fps if fps is not None else (seq_fps or 1.0)
    seq = FeatureSeq(data=cache["out"], fps=out_fps, kind="injected")
    if return_weights:
        return seq, cache["chan_w"], cache["spat_w"]
    return seq


def agva_backward(f_a, f_rgb, w: AgvaWeights, g_out) -> dict:
    """Vector-Jacobian products of the gate against an output cotangent.

    Returns gradients for both inputs and every weight tensor, keyed by the
    field names used in the tensor map ("f_a", "f_rgb", "w1", "w2",
    "urgbc.weight", ...).
    """
    f_a_arr, _ = _audio_as_array(f_a)
    f_rgb = _check_agva_inputs(f_a_arr, f_rgb, w)
    g = as_float_array(g_out, "g_out", ndim=2)
    c = _agva_forward(f_a_arr, f_rgb, w)
    n = c["n"]

    d_spat = (g[:, None, :] * c["fc"]).sum(axis=2)
    d_fc = c["spat_w"][:, :, None] * g[:, None, :]

    d_scores = c["spat_w"] * (d_spat - (d_spat * c["spat_w"]).sum(axis=1, keepdims=True))
    d_scores_pre = d_scores * (1.0 - c["scores"] ** 2)
    d_prod_s = d_scores_pre[:, :, None] * w.w2
    d_w2 = (c["prod_s"] * d_scores_pre[:, :, None]).sum(axis=(0, 1))

    d_h_as = (d_prod_s * c["h_rgbs"]).sum(axis=1)
    d_h_rgbs = d_prod_s * c["h_as"][:, None, :]
    d_h_rgbs_pre = d_h_rgbs * (c["h_rgbs_pre"] > 0)
    d_fc = d_fc + d_h_rgbs_pre @ w.urgbs.weight
    d_urgbs_w = np.einsum("tns,tnd->sd", d_h_rgbs_pre, c["fc"])
    d_urgbs_b = d_h_rgbs_pre.sum(axis=(0, 1))

    d_h_as_pre = d_h_as * (c["h_as_pre"] > 0)
    d_uas_w = d_h_as_pre.T @ f_a_arr
    d_uas_b = d_h_as_pre.sum(axis=0)
    d_f_a = d_h_as_pre @ w.uas.weight

    d_chan = (d_fc * f_rgb).sum(axis=1)
    d_f_rgb = d_fc * c["chan_w"][:, None, :]

    d_logits_c = d_chan * c["chan_w"] * (1.0 - c["chan_w"])
    d_w1 = d_logits_c.T @ c["h_1c"]
    d_h_1c = d_logits_c @ w.w1
    d_h_1c_pre = d_h_1c * (c["h_1c_pre"] > 0)
    d_u1c_w = d_h_1c_pre.T @ c["pooled"]
    d_u1c_b = d_h_1c_pre.sum(axis=0)

    d_pooled = d_h_1c_pre @ w.u1c.weight
    d_prod_c = np.repeat(d_pooled[:, None, :], n, axis=1) / n
    d_f_a = d_f_a + (d_prod_c * c["h_rgbc"]).sum(axis=1)
    d_h_rgbc = d_prod_c * f_a_arr[:, None, :]
    d_h_rgbc_pre = d_h_rgbc * (c["h_rgbc_pre"] > 0)
    d_urgbc_w = np.einsum("tns,tnd->sd", d_h_rgbc_pre, f_rgb)
    d_urgbc_b = d_h_rgbc_pre.sum(axis=(0, 1))
    d_f_rgb = d_f_rgb + d_h_rgbc_pre @ w.urgbc.weight

    return {
        "f_a": d_f_a, "f_rgb": d_f_rgb, "w1": d_w1, "w2": d_w2,
        "urgbc.weight": d_urgbc_w, "urgbc.bias": d_urgbc_b,
        "u1c.weight": d_u1c_w, "u1c.bias": d_u1c_b,
        "uas.weight": d_uas_w, "uas.bias": d_uas_b,
        "urgbs.weight": d_urgbs_w, "urgbs.bias": d_urgbs_b,
    }


def _split_heads(x: np.ndarray, heads: int) -> np.ndarray:
    t, d = x.shape
    return x.reshape(t, heads, d // heads).transpose(1, 0, 2)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    h, t, dh = x.shape
    return x.transpose(1, 0, 2).reshape(t, h * dh)


def _attention_forward(x: np.ndarray, w: AttnWeights) -> dict:
    q = _split_heads(x @ w.wq.T, w.heads)
    k = _split_heads(x @ w.wk.T, w.heads)
    v = _split_heads(x @ w.wv.T, w.heads)
    scale = 1.0 / np.sqrt(q.shape[2])
    scores = (q @ k.transpose(0, 2, 1)) * scale
    att = softmax(scores, axis=-1)
    ctx = _merge_heads(att @ v)
    out = ctx @ w.wo.T
    return {"q": q, "k": k, "v": v, "scale": scale, "att": att, "ctx": ctx, "out": out}


def self_attention(x, w: AttnWeights, return_weights: bool = False):
    """Scaled dot-product multi-head self-attention over the time axis."""
    seq = x if isinstance(x, FeatureSeq) else None
    arr = seq.data if seq is not None else as_float_array(x, "x", ndim=2)
    check_finite(arr, "x")
    if arr.shape[1] != w.dim:
        raise InvalidInputError(f"input width {arr.shape[1]} does not match weights ({w.dim})")
    cache = _attention_forward(arr, w)
    out = cache["out"]
    if seq is not None:
        out = FeatureSeq(data=out, fps=seq.fps, kind=seq.kind)
    if return_weights:
        return out, cache["att"]
    return out


def self_attention_backward(x, w: AttnWeights, g_out) -> dict:
    """Gradients of self-attention w.r.t. the input and all four projections."""
    arr = x.data if isinstance(x, FeatureSeq) else as_float_array(x, "x", ndim=2)
    g = as_float_array(g_out, "g_out", ndim=2)
    c = _attention_forward(arr, w)

    d_ctx = _split_heads(g @ w.wo, w.heads)
    d_wo = g.T @ c["ctx"]
    d_att = d_ctx @ c["v"].transpose(0, 2, 1)
    d_v = c["att"].transpose(0, 2, 1) @ d_ctx
    d_scores = c["att"] * (d_att - (d_att * c["att"]).sum(axis=-1, keepdims=True))
    d_q = d_scores @ c["k"] * c["scale"]
    d_k = d_scores.transpose(0, 2, 1) @ c["q"] * c["scale"]

    d_q2, d_k2, d_v2 = _merge_heads(d_q), _merge_heads(d_k), _merge_heads(d_v)
    d_x = d_q2 @ w.wq + d_k2 @ w.wk + d_v2 @ w.wv
    return {
        "x": d_x,
        "wq": d_q2.T @ arr,
        "wk": d_k2.T @ arr,
        "wv": d_v2.T @ arr,
        "wo": d_wo,
    }


def _split_index(b: int, p: float) -> int:
    # round-half-up keeps b=4, p=0.25 at exactly 1 plain element
    return int(np.floor(b * p + 0.5))


def audio_dropout_split(batch, p: float):
    """Split a batch into (guided_part, plain_part) at index round(b*p).

    The plain part is the first round(b*p) elements (these lose their audio
    guidance); the rest stay guided. Concatenating plain then guided
    reproduces the input, so the split is a partition.
    """
    check_unit_interval(p, "p")
    b = len(batch)
    if b < 1:
        raise InvalidInputError("batch must contain at least one element")
    s = _split_index(b, p)
    return batch[s:], batch[:s]


def rgb_injector(
    f_rgb_batch,
    f_a_batch,
    params: InjectorParams,
    w: AgvaWeights,
    *,
    seed: int = 0,
    fps: float = 1.0,
) -> list[FeatureSeq]:
    """Audio-dropout feature injector over a batch of clips.

    A seeded permutation chooses which round(b*p) clips lose their audio;
    those are flattened per frame and linearly projected, the rest pass
    through the attention gate. Branch outputs are reassembled in the
    original batch order and each clip runs through self-attention over
    time. With p=1 the audio input is never read.
    """
    f_rgb = as_float_array(f_rgb_batch, "f_rgb_batch", ndim=4)
    check_finite(f_rgb, "f_rgb_batch")
    b, t, n, d = f_rgb.shape
    if isinstance(f_a_batch, np.ndarray) or not all(
        isinstance(el, FeatureSeq) for el in f_a_batch
    ):
        f_a = as_float_array(f_a_batch, "f_a_batch", ndim=3)
        check_finite(f_a, "f_a_batch")
        audio_rows = [f_a[i] for i in range(f_a.shape[0])]
        out_fps = fps
    else:
        audio_rows = [seq.data for seq in f_a_batch]
        out_fps = f_a_batch[0].fps
    if len(audio_rows) != b:
        raise InvalidInputError(
            f"batch sizes differ: {b} visual clips, {len(audio_rows)} audio clips"
        )
    if params.tile_proj.in_dim != n * d:
        raise InvalidInputError(
            f"tile projection expects width {params.tile_proj.in_dim}, features give {n * d}"
        )
    if params.tile_proj.out_dim != d:
        raise InvalidInputError("tile projection must map back to the channel width")

    rng = np.random.default_rng(seed)
    order = rng.permutation(b)
    s = _split_index(b, params.dropout_rate)
    plain_ids, guided_ids = order[:s], order[s:]

    combined = np.empty((b, t, d), dtype=np.float64)
    for i in plain_ids:
        combined[i] = params.tile_proj.apply(f_rgb[i].reshape(t, n * d))
    for i in guided_ids:
        if audio_rows[i].shape[0] != t:
            raise InvalidInputError("audio and visual time lengths differ")
        combined[i] = _agva_forward(audio_rows[i], f_rgb[i], w)["out"]
    return [
        FeatureSeq(data=_attention_forward(combined[i], params.attn)["out"],
                   fps=out_fps, kind="injected")
        for i in range(b)
    ]


def _as_triplet_batch(arr, name: str) -> np.ndarray:
    a = as_float_array(arr, name)
    check_finite(a, name)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise InvalidInputError(f"{name} must be a vector or a batch of vectors")
    return a


def triplet_loss(f_v, f_pos, f_neg, params: TripletParams | None = None) -> float:
    """Hinge on squared distances, summed over the batch."""
    params = params or TripletParams()
    v = _as_triplet_batch(f_v, "f_v")
    p = _as_triplet_batch(f_pos, "f_pos")
    n = _as_triplet_batch(f_neg, "f_neg")
    if not (v.shape == p.shape == n.shape):
        raise InvalidInputError(
            f"triplet shapes differ: {v.shape}, {p.shape}, {n.shape}"
        )
    d_pos = ((v - p) ** 2).sum(axis=1)
    d_neg = ((v - n) ** 2).sum(axis=1)
    return float(np.maximum(0.0, d_pos - d_neg + params.margin).sum())


def triplet_loss_grads(f_v, f_pos, f_neg, params: TripletParams | None = None):
    """Analytic gradients of triplet_loss w.r.t. all three inputs."""
    params = params or TripletParams()
    squeeze = np.ndim(f_v) == 1
    v = _as_triplet_batch(f_v, "f_v")
    p = _as_triplet_batch(f_pos, "f_pos")
    n = _as_triplet_batch(f_neg, "f_neg")
    active = (((v - p) ** 2).sum(axis=1) - ((v - n) ** 2).sum(axis=1)
              + params.margin) > 0
    m = active[:, None]
    d_v = 2.0 * (n - p) * m
    d_p = -2.0 * (v - p) * m
    d_n = 2.0 * (v - n) * m
    if squeeze:
        return d_v[0], d_p[0], d_n[0]
    return d_v, d_p, d_n


def _check_focal_inputs(p, targets) -> tuple[np.ndarray, np.ndarray]:
    p = as_float_array(p, "p", ndim=1)
    y = as_float_array(targets, "targets", ndim=1)
    check_finite(p, "p")
    if p.size == 0:
        raise InvalidInputError("p must be non-empty")
    if p.shape != y.shape:
        raise InvalidInputError(f"p and targets shapes differ: {p.shape} vs {y.shape}")
    if np.any((p <= 0.0) | (p >= 1.0)):
        raise NumericError("probabilities must lie strictly in (0, 1); clamp first")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise InvalidInputError("targets must be binary")
    return p, y


def focal_loss(p, targets, params: FocalParams | None = None) -> float:
    """Mean of -alpha_t (1 - p_t)^gamma log(p_t) over frames."""
    params = params or FocalParams()
    p, y = _check_focal_inputs(p, targets)
    p_t = np.where(y == 1.0, p, 1.0 - p)
    a_t = np.where(y == 1.0, params.alpha_t, 1.0 - params.alpha_t)
    return float(np.mean(-a_t * (1.0 - p_t) ** params.gamma * np.log(p_t)))


def focal_loss_grad(p, targets, params: FocalParams | None = None) -> np.ndarray:
    """Gradient of focal_loss w.r.t. the probabilities p."""
    params = params or FocalParams()
    p, y = _check_focal_inputs(p, targets)
    p_t = np.where(y == 1.0, p, 1.0 - p)
    a_t = np.where(y == 1.0, params.alpha_t, 1.0 - params.alpha_t)
    one_m = 1.0 - p_t
    if params.gamma == 0.0:
        d_pt = -a_t / p_t
    else:
        d_pt = (a_t * params.gamma * one_m ** (params.gamma - 1.0) * np.log(p_t)
                - a_t * one_m ** params.gamma / p_t)
    sign = np.where(y == 1.0, 1.0, -1.0)
    return d_pt * sign / p.size


def joint_loss(l_im: float, l_ex_frames, params: JointLossParams | None = None) -> float:
    """Weighted sum of the batch loss and the mean per-frame loss."""
    params = params or JointLossParams()
    frames = as_float_array(l_ex_frames, "l_ex_frames", ndim=1)
    check_finite(frames, "l_ex_frames")
    if frames.size == 0:
        raise InvalidInputError("l_ex_frames must be non-empty")
    return float(params.lambda1 * l_im + params.lambda2 * frames.mean())


def grad_check(fn, point, step: float = 1e-5) -> float:
    """Max relative error of fn's analytic gradient vs central differences.

    fn maps a 1-D point to (scalar value, gradient array); the relative
    error per coordinate is |analytic - fd| / max(1, |analytic|).
    """
    check_positive(step, "step")
    x = as_float_array(point, "point", ndim=1).copy()
    check_finite(x, "point")
    value, grad = fn(x)
    grad = as_float_array(grad, "gradient", ndim=1)
    if grad.shape != x.shape:
        raise InvalidInputError(
            f"gradient shape {grad.shape} does not match point shape {x.shape}"
        )
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        raise NumericError("fn returned non-finite value or gradient")
    fd = np.empty_like(x)
    for i in range(x.size):
        orig = x[i]
        x[i] = orig + step
        f_plus = fn(x)[0]
        x[i] = orig - step
        f_minus = fn(x)[0]
        x[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericError("fn returned non-finite value during differencing")
        fd[i] = (f_plus - f_minus) / (2.0 * step)
    rel = np.abs(grad - fd) / np.maximum(1.0, np.abs(grad))
    return float(rel.max())


def tensor_map(arrays: dict) -> dict:
    """Serialize named arrays to the flat JSON form {"name": {shape, data}}."""
    out = {}
    for name, arr in arrays.items():
        a = np.asarray(arr, dtype=np.float64)
        out[name] = {"shape": list(a.shape), "data": a.ravel().tolist()}
    return out


def arrays_from_tensor_map(data: dict) -> dict:
    """Inverse of tensor_map; malformed entries raise a format error."""
    if not isinstance(data, dict):
        raise FormatError("tensor map must be a JSON object")
    out = {}
    for name, entry in data.items():
        try:
            shape = tuple(int(s) for s in entry["shape"])
            values = np.asarray(entry["data"], dtype=np.float64)
        except (TypeError, KeyError, ValueError) as exc:
            raise FormatError(f"tensor {name!r} is malformed: {exc}") from None
        expected = int(np.prod(shape, dtype=np.int64)) if shape else 1
        if values.size != expected:
            raise FormatError(
                f"tensor {name!r} has {values.size} values for shape {shape}"
            )
        out[name] = values.reshape(shape)
    return out
