"""Numeric verification of the package's analytic gradients.

Each target family draws seeded random points, evaluates the analytic
gradient, and compares it against central finite differences via
grad_check. Points that land a ReLU pre-activation (or a hinge boundary)
within the differencing step are redrawn, since the true derivative does
not exist there.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError
from .motion_rhythm import RhythmClassifierParams, classifier_loss_and_grads
from .neural_blocks import (
    AgvaWeights,
    AttnWeights,
    FocalParams,
    LinearParams,
    TripletParams,
    _agva_forward,
    agva,
    agva_backward,
    focal_loss,
    focal_loss_grad,
    grad_check,
    self_attention,
    self_attention_backward,
    triplet_loss,
    triplet_loss_grads,
)
from .validation import check_positive, check_positive_int

GRAD_TARGETS = ("focal", "triplet", "classifier", "gate", "attention")

# Redraw a point when any kink sits closer to it than this.
_KINK_MARGIN = 1e-3
_MAX_REDRAWS = 50


def _focal_point(rng: np.random.Generator, step: float) -> float:
    n = 8
    p = rng.uniform(0.05, 0.95, n)
    y = rng.integers(0, 2, n).astype(np.float64)
    params = FocalParams(
        alpha_t=float(rng.uniform(0.1, 0.9)),
        gamma=float(rng.choice([0.0, 1.0, 2.0, 3.0])),
    )

    def fn(x):
        return focal_loss(x, y, params), focal_loss_grad(x, y, params)

    return grad_check(fn, p, step)


def _triplet_point(rng: np.random.Generator, step: float) -> float:
    b, d = 3, 5
    params = TripletParams(margin=0.2)
    for _ in range(_MAX_REDRAWS):
        v = rng.standard_normal((b, d))
        pos = v + 0.4 * rng.standard_normal((b, d))
        neg = v + 0.4 * rng.standard_normal((b, d))
        hinge = (
            ((v - pos) ** 2).sum(axis=1)
            - ((v - neg) ** 2).sum(axis=1)
            + params.margin
        )
        if np.all(np.abs(hinge) > _KINK_MARGIN):
            break
    size = b * d
    point = np.concatenate([v.ravel(), pos.ravel(), neg.ravel()])

    def fn(x):
        vv = x[:size].reshape(b, d)
        pp = x[size : 2 * size].reshape(b, d)
        nn = x[2 * size :].reshape(b, d)
        loss = triplet_loss(vv, pp, nn, params)
        g_v, g_p, g_n = triplet_loss_grads(vv, pp, nn, params)
        return loss, np.concatenate([g_v.ravel(), g_p.ravel(), g_n.ravel()])

    return grad_check(fn, point, step)


def _classifier_point(rng: np.random.Generator, step: float) -> float:
    t, d_m, d_i, h_m, h_i = 6, 5, 7, 3, 4
    mot = rng.standard_normal((t, d_m))
    inj = rng.standard_normal((t, d_i))
    y = rng.integers(0, 2, t).astype(np.float64)
    focal = FocalParams()
    n_mot, n_inj, n_e = h_m * d_m, h_i * d_i, h_m + h_i

    def unpack(x) -> RhythmClassifierParams:
        return RhythmClassifierParams(
            w_mot=x[:n_mot].reshape(h_m, d_m),
            w_inj=x[n_mot : n_mot + n_inj].reshape(h_i, d_i),
            w_e=x[n_mot + n_inj : n_mot + n_inj + n_e],
            b_e=float(x[-1]),
        )

    for _ in range(_MAX_REDRAWS):
        point = 0.4 * rng.standard_normal(n_mot + n_inj + n_e + 1)
        params = unpack(point)
        pres = np.concatenate(
            [(mot @ params.w_mot.T).ravel(), (inj @ params.w_inj.T).ravel()]
        )
        if np.abs(pres).min() > _KINK_MARGIN:
            break

    def fn(x):
        loss, grads = classifier_loss_and_grads(mot, inj, y, unpack(x), focal)
        return loss, np.concatenate(
            [
                grads["w_mot"].ravel(),
                grads["w_inj"].ravel(),
                grads["w_e"],
                [grads["b_e"]],
            ]
        )

    return grad_check(fn, point, step)


def _gate_point(rng: np.random.Generator, step: float) -> float:
    t, n, d, d_a, d_mid, d_s = 3, 4, 5, 4, 3, 4
    g_out = rng.standard_normal((t, d))
    shapes = (
        ("f_a", (t, d_a)),
        ("f_rgb", (t, n, d)),
        ("w1", (d, d_mid)),
        ("w2", (d_s,)),
        ("urgbc.weight", (d_a, d)),
        ("urgbc.bias", (d_a,)),
        ("u1c.weight", (d_mid, d_a)),
        ("u1c.bias", (d_mid,)),
        ("uas.weight", (d_s, d_a)),
        ("uas.bias", (d_s,)),
        ("urgbs.weight", (d_s, d)),
        ("urgbs.bias", (d_s,)),
    )

    def unpack(x):
        parts = {}
        offset = 0
        for name, shape in shapes:
            size = int(np.prod(shape))
            parts[name] = x[offset : offset + size].reshape(shape)
            offset += size
        weights = AgvaWeights(
            urgbc=LinearParams(parts["urgbc.weight"], parts["urgbc.bias"]),
            u1c=LinearParams(parts["u1c.weight"], parts["u1c.bias"]),
            uas=LinearParams(parts["uas.weight"], parts["uas.bias"]),
            urgbs=LinearParams(parts["urgbs.weight"], parts["urgbs.bias"]),
            w1=parts["w1"],
            w2=parts["w2"],
        )
        return parts["f_a"], parts["f_rgb"], weights

    total = sum(int(np.prod(shape)) for _, shape in shapes)
    for _ in range(_MAX_REDRAWS):
        point = 0.6 * rng.standard_normal(total)
        f_a, f_rgb, weights = unpack(point)
        cache = _agva_forward(f_a, f_rgb, weights)
        pres = np.concatenate(
            [
                cache[key].ravel()
                for key in ("h_rgbc_pre", "h_1c_pre", "h_as_pre", "h_rgbs_pre")
            ]
        )
        if np.abs(pres).min() > _KINK_MARGIN:
            break

    order = [name for name, _ in shapes]

    def fn(x):
        f_a, f_rgb, weights = unpack(x)
        out = agva(f_a, f_rgb, weights).data
        grads = agva_backward(f_a, f_rgb, weights, g_out)
        value = float((out * g_out).sum())
        return value, np.concatenate([grads[name].ravel() for name in order])

    return grad_check(fn, point, step)


def _attention_point(rng: np.random.Generator, step: float) -> float:
    t, dim, heads = 4, 6, 2
    g_out = rng.standard_normal((t, dim))
    n_x = t * dim
    n_w = dim * dim
    point = 0.5 * rng.standard_normal(n_x + 4 * n_w)

    def unpack(vec):
        x = vec[:n_x].reshape(t, dim)
        mats = [
            vec[n_x + i * n_w : n_x + (i + 1) * n_w].reshape(dim, dim)
            for i in range(4)
        ]
        return x, AttnWeights(heads=heads, wq=mats[0], wk=mats[1], wv=mats[2], wo=mats[3])

    def fn(vec):
        x, w = unpack(vec)
        out = self_attention(x, w)
        grads = self_attention_backward(x, w, g_out)
        value = float((out * g_out).sum())
        return value, np.concatenate(
            [grads[k].ravel() for k in ("x", "wq", "wk", "wv", "wo")]
        )

    return grad_check(fn, point, step)


_POINT_FNS = {
    "focal": _focal_point,
    "triplet": _triplet_point,
    "classifier": _classifier_point,
    "gate": _gate_point,
    "attention": _attention_point,
}


def gradient_suite(
    points: int = 25,
    step: float = 1e-5,
    seed: int = 0,
    targets=None,
) -> dict[str, float]:
    """Max relative analytic-vs-numeric gradient error per target family."""
    chosen = GRAD_TARGETS if targets is None else tuple(targets)
    unknown = sorted(set(chosen) - set(GRAD_TARGETS))
    if unknown:
        raise InvalidInputError(
            f"unknown gradient target(s) {unknown}; choose from {GRAD_TARGETS}"
        )
    check_positive_int(points, "points")
    check_positive(step, "step")
    out = {}
    for name in chosen:
        rng = np.random.default_rng([seed, GRAD_TARGETS.index(name)])
        worst = 0.0
        for _ in range(points):
            worst = max(worst, _POINT_FNS[name](rng, step))
        out[name] = worst
    return out
