"""Unit tests for the differentiable building blocks.

Every expected value below was computed by hand (or by direct scalar
evaluation of the defining formula) before the library code existed, and the
finite-difference checker serves as the oracle for every analytic gradient.
"""

import numpy as np
import pytest

from mudar.datatypes import FeatureSeq
from mudar.errors import InvalidInputError, NumericError
from mudar.neural_blocks import (
    AgvaWeights,
    AttnWeights,
    FocalParams,
    InjectorParams,
    JointLossParams,
    LinearParams,
    TripletParams,
    agva,
    agva_backward,
    arrays_from_tensor_map,
    audio_dropout_split,
    clamp_probs,
    focal_loss,
    focal_loss_grad,
    grad_check,
    joint_loss,
    relu,
    rgb_injector,
    self_attention,
    self_attention_backward,
    sigmoid,
    softmax,
    tensor_map,
    triplet_loss,
    triplet_loss_grads,
)

# Matching rows of a 2-frame identity-projection attention toy score
# q.k = 1/sqrt(2); the softmax weights below are exp(s)/(exp(s)+1) and its
# complement, evaluated directly.
ATT_SAME = 0.6697615493266569
ATT_OTHER = 0.3302384506733431


def identity_agva_weights() -> AgvaWeights:
    """1-channel, 1-dim toy: identity U maps, zero W1/W2."""
    ident = LinearParams(weight=np.array([[1.0]]), bias=np.array([0.0]))
    return AgvaWeights(
        urgbc=ident,
        u1c=ident,
        uas=ident,
        urgbs=ident,
        w1=np.array([[0.0]]),
        w2=np.array([0.0]),
    )


class TestActivations:
    def test_sigmoid_midpoint_and_symmetry(self):
        assert sigmoid(0.0) == pytest.approx(0.5)
        assert sigmoid(np.array([2.0])) + sigmoid(np.array([-2.0])) == pytest.approx(1.0)

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        w = softmax(rng.standard_normal((5, 7)), axis=-1)
        assert np.allclose(w.sum(axis=-1), 1.0, atol=1e-12)
        assert w.min() > 0.0

    def test_softmax_is_shift_invariant(self):
        x = np.array([1.0, 2.0, 3.0])
        assert np.allclose(softmax(x), softmax(x + 100.0))

    def test_relu_clamps_negatives(self):
        assert np.array_equal(relu(np.array([-1.0, 0.0, 2.5])), [0.0, 0.0, 2.5])


class TestAgva:
    def test_toy_channel_half_spatial_uniform(self):
        w = identity_agva_weights()
        f_rgb = np.array([[[2.0], [4.0]]])  # (t=1, n=2, d=1)
        f_a = np.array([[1.0]])
        out, chan_w, spat_w = agva(f_a, f_rgb, w, return_weights=True)
        assert np.allclose(chan_w, 0.5)
        assert np.allclose(spat_w, [[0.5, 0.5]])
        # weighted sum of half-scaled positions: 0.5*1 + 0.5*2
        assert np.allclose(out.data, [[1.5]])
        assert out.kind == "injected"

    def test_spatial_weights_sum_to_one(self):
        rng = np.random.default_rng(3)
        w = AgvaWeights.seeded(d=4, d_a=3, d_mid=5, d_s=6, seed=11)
        f_rgb = rng.standard_normal((7, 9, 4))
        f_a = rng.standard_normal((7, 3))
        _, chan_w, spat_w = agva(f_a, f_rgb, w, return_weights=True)
        assert np.allclose(spat_w.sum(axis=1), 1.0, atol=1e-6)
        assert np.all((chan_w > 0.0) & (chan_w < 1.0))

    def test_accepts_feature_seq_audio(self):
        w = identity_agva_weights()
        f_a = FeatureSeq(data=np.array([[1.0]]), fps=8.0, kind="audio")
        out = agva(f_a, np.array([[[2.0], [4.0]]]), w)
        assert out.fps == 8.0
        assert np.allclose(out.data, [[1.5]])

    def test_time_length_mismatch_rejected(self):
        w = identity_agva_weights()
        with pytest.raises(InvalidInputError):
            agva(np.ones((2, 1)), np.ones((3, 2, 1)), w)

    def test_channel_dim_mismatch_rejected(self):
        w = identity_agva_weights()
        with pytest.raises(InvalidInputError):
            agva(np.ones((1, 1)), np.ones((1, 2, 3)), w)


class TestAudioDropoutSplit:
    def test_p_zero_everything_guided(self):
        batch = np.arange(8.0).reshape(4, 2)
        guided, plain = audio_dropout_split(batch, 0.0)
        assert plain.shape[0] == 0
        assert np.array_equal(guided, batch)

    def test_p_one_everything_plain(self):
        batch = np.arange(8.0).reshape(4, 2)
        guided, plain = audio_dropout_split(batch, 1.0)
        assert guided.shape[0] == 0
        assert np.array_equal(plain, batch)

    def test_quarter_of_four_is_one_plain(self):
        batch = np.arange(4.0)[:, None]
        guided, plain = audio_dropout_split(batch, 0.25)
        assert plain.shape[0] == 1 and guided.shape[0] == 3
        assert np.array_equal(plain, [[0.0]])
        assert np.array_equal(guided, [[1.0], [2.0], [3.0]])

    def test_partition_reassembles_input(self):
        batch = np.random.default_rng(5).standard_normal((6, 3))
        for p in (0.0, 0.3, 0.5, 0.9, 1.0):
            guided, plain = audio_dropout_split(batch, p)
            assert np.array_equal(np.concatenate([plain, guided]), batch)

    def test_p_out_of_range_rejected(self):
        with pytest.raises(InvalidInputError):
            audio_dropout_split(np.ones((2, 1)), 1.5)


class TestSelfAttention:
    def test_single_frame_reduces_to_projection(self):
        rng = np.random.default_rng(1)
        w = AttnWeights.seeded(dim=4, heads=2, seed=2)
        x = rng.standard_normal((1, 4))
        out = self_attention(x, w)
        assert np.allclose(out, x @ w.wv.T @ w.wo.T)

    def test_two_frame_identity_toy(self):
        w = AttnWeights(heads=1, wq=np.eye(2), wk=np.eye(2), wv=np.eye(2), wo=np.eye(2))
        x = np.eye(2)
        out, att = self_attention(x, w, return_weights=True)
        assert np.allclose(att[0, 0], [ATT_SAME, ATT_OTHER], atol=1e-12)
        assert np.allclose(out[0], [ATT_SAME, ATT_OTHER], atol=1e-12)
        assert np.allclose(out[1], [ATT_OTHER, ATT_SAME], atol=1e-12)

    def test_attention_rows_sum_to_one(self):
        rng = np.random.default_rng(9)
        w = AttnWeights.seeded(dim=6, heads=3, seed=4)
        _, att = self_attention(rng.standard_normal((5, 6)), w, return_weights=True)
        assert np.allclose(att.sum(axis=-1), 1.0, atol=1e-6)

    def test_feature_seq_in_feature_seq_out(self):
        w = AttnWeights.seeded(dim=4, heads=1, seed=8)
        seq = FeatureSeq(data=np.zeros((3, 4)), fps=8.0, kind="rgb")
        out = self_attention(seq, w)
        assert isinstance(out, FeatureSeq)
        assert out.fps == 8.0 and out.kind == "rgb"

    def test_indivisible_heads_rejected(self):
        with pytest.raises(InvalidInputError):
            AttnWeights(heads=3, wq=np.eye(4), wk=np.eye(4), wv=np.eye(4), wo=np.eye(4))


class TestRgbInjector:
    @staticmethod
    def _setup(b=4, t=5, n=6, d=3, da=2, seed=0):
        rng = np.random.default_rng(seed)
        f_rgb = rng.standard_normal((b, t, n, d))
        f_a = rng.standard_normal((b, t, da))
        w = AgvaWeights.seeded(d=d, d_a=da, d_mid=4, d_s=4, seed=21)
        params = InjectorParams(
            dropout_rate=0.5,
            tile_proj=LinearParams.seeded(n * d, d, seed=22),
            attn=AttnWeights.seeded(dim=d, heads=1, seed=23),
        )
        return f_rgb, f_a, w, params

    def test_p_one_ignores_audio(self):
        f_rgb, f_a, w, params = self._setup()
        params = InjectorParams(dropout_rate=1.0, tile_proj=params.tile_proj, attn=params.attn)
        out_a = rgb_injector(f_rgb, f_a, params, w, seed=7)
        out_b = rgb_injector(f_rgb, f_a + 100.0, params, w, seed=7)
        for seq_a, seq_b in zip(out_a, out_b):
            assert np.array_equal(seq_a.data, seq_b.data)

    def test_p_zero_all_guided_responds_to_audio(self):
        f_rgb, f_a, w, params = self._setup()
        params = InjectorParams(dropout_rate=0.0, tile_proj=params.tile_proj, attn=params.attn)
        out_a = rgb_injector(f_rgb, f_a, params, w, seed=7)
        out_b = rgb_injector(f_rgb, f_a + 1.0, params, w, seed=7)
        assert any(not np.allclose(sa.data, sb.data) for sa, sb in zip(out_a, out_b))

    @pytest.mark.parametrize("p", [0.0, 0.25, 0.5, 1.0])
    def test_batch_cardinality_preserved(self, p):
        f_rgb, f_a, w, params = self._setup()
        params = InjectorParams(dropout_rate=p, tile_proj=params.tile_proj, attn=params.attn)
        out = rgb_injector(f_rgb, f_a, params, w, seed=3)
        assert len(out) == f_rgb.shape[0]
        for seq in out:
            assert seq.data.shape == (f_rgb.shape[1], f_rgb.shape[3])
            assert seq.kind == "injected"

    def test_seed_controls_membership(self):
        f_rgb, f_a, w, params = self._setup()
        out_a = rgb_injector(f_rgb, f_a, params, w, seed=1)
        out_b = rgb_injector(f_rgb, f_a, params, w, seed=1)
        for sa, sb in zip(out_a, out_b):
            assert np.array_equal(sa.data, sb.data)


class TestTripletLoss:
    def test_positive_at_anchor_gives_zero(self):
        loss = triplet_loss(
            np.zeros(2), np.zeros(2), np.array([1.0, 0.0]), TripletParams(margin=0.2)
        )
        assert loss == 0.0

    def test_identical_pos_neg_gives_margin(self):
        v = np.array([0.3, -0.4])
        other = np.array([1.0, 2.0])
        assert triplet_loss(v, other, other, TripletParams(margin=0.2)) == pytest.approx(0.2)

    def test_hand_value(self):
        loss = triplet_loss(
            np.zeros(2),
            np.array([1.0, 0.0]),
            np.array([0.3, 0.0]),
            TripletParams(margin=0.2),
        )
        assert loss == pytest.approx(1.11)

    def test_batch_sums_rows(self):
        f_v = np.zeros((2, 2))
        f_pos = np.array([[1.0, 0.0], [1.0, 0.0]])
        f_neg = np.array([[0.3, 0.0], [0.3, 0.0]])
        assert triplet_loss(f_v, f_pos, f_neg) == pytest.approx(2.22)

    def test_nonnegative_on_random_triples(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            args = rng.standard_normal((3, 4, 5))
            assert triplet_loss(args[0], args[1], args[2]) >= 0.0

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(InvalidInputError):
            triplet_loss(np.zeros(2), np.zeros(3), np.zeros(2))


class TestFocalLoss:
    def test_reduces_to_bce_at_gamma_zero(self):
        # alpha weights are class-dependent (alpha_t for positives,
        # 1-alpha_t for negatives), so plain cross-entropy appears when the
        # weight of every frame present is 1.
        p = np.array([0.9, 0.8])
        y = np.array([1.0, 1.0])
        loss = focal_loss(p, y, FocalParams(alpha_t=1.0, gamma=0.0))
        assert loss == pytest.approx(0.164252033486018, abs=1e-12)

    def test_half_alpha_gives_half_bce_on_mixed_targets(self):
        p = np.array([0.9, 0.2])
        y = np.array([1.0, 0.0])
        loss = focal_loss(p, y, FocalParams(alpha_t=0.5, gamma=0.0))
        assert loss == pytest.approx(0.5 * 0.164252033486018, abs=1e-12)

    def test_single_positive_hand_value(self):
        loss = focal_loss(
            np.array([0.9]), np.array([1.0]), FocalParams(alpha_t=0.25, gamma=2.0)
        )
        assert loss == pytest.approx(0.00026340128914456573, rel=1e-9)

    def test_monotone_decreasing_in_p_for_positive(self):
        ps = np.linspace(0.05, 0.95, 19)
        losses = [
            focal_loss(np.array([p]), np.array([1.0]), FocalParams()) for p in ps
        ]
        assert all(a > b for a, b in zip(losses, losses[1:]))

    def test_boundary_probability_rejected(self):
        with pytest.raises(NumericError):
            focal_loss(np.array([1.0]), np.array([1.0]), FocalParams())
        with pytest.raises(NumericError):
            focal_loss(np.array([0.0]), np.array([0.0]), FocalParams())

    def test_nonbinary_target_rejected(self):
        with pytest.raises(InvalidInputError):
            focal_loss(np.array([0.5]), np.array([0.5]), FocalParams())

    def test_clamp_probs_keeps_open_interval(self):
        p = clamp_probs(np.array([0.0, 0.5, 1.0]))
        assert p[0] > 0.0 and p[2] < 1.0 and p[1] == 0.5


class TestJointLoss:
    def test_imitation_only(self):
        assert joint_loss(0.7, [1.0, 2.0], JointLossParams(1.0, 0.0)) == pytest.approx(0.7)

    def test_frame_mean_only(self):
        assert joint_loss(9.9, [0.2, 0.4], JointLossParams(0.0, 1.0)) == pytest.approx(0.3)

    def test_weighted_hand_value(self):
        assert joint_loss(1.0, [1.0, 1.0, 1.0], JointLossParams(0.5, 2.0)) == pytest.approx(2.5)

    def test_empty_frames_rejected(self):
        with pytest.raises(InvalidInputError):
            joint_loss(1.0, [], JointLossParams())

    def test_both_weights_zero_rejected(self):
        with pytest.raises(InvalidInputError):
            JointLossParams(0.0, 0.0)


class TestGradCheck:
    def test_quadratic_is_exact(self):
        def fn(x):
            return float(x @ x), 2.0 * x

        err = grad_check(fn, np.array([0.3, -1.2, 2.0]), step=1e-5)
        assert err <= 1e-8

    def test_flags_wrong_gradient(self):
        def fn(x):
            return float(x @ x), 3.0 * x

        assert grad_check(fn, np.array([1.0, 1.0])) > 1e-2

    def test_nonfinite_evaluation_rejected(self):
        def fn(x):
            with np.errstate(invalid="ignore"):
                return float(np.log(x[0])), np.array([1.0 / x[0]])

        with pytest.raises(NumericError):
            grad_check(fn, np.array([-1.0]))

    def test_triplet_gradients_match(self):
        rng = np.random.default_rng(17)
        params = TripletParams(margin=0.2)
        for trial in range(20):
            base = rng.standard_normal((3, 4)) * 0.5

            def fn(x):
                f_v, f_pos, f_neg = x.reshape(3, 4)
                loss = triplet_loss(f_v, f_pos, f_neg, params)
                grads = triplet_loss_grads(f_v, f_pos, f_neg, params)
                return loss, np.concatenate([g.ravel() for g in grads])

            assert grad_check(fn, base.ravel()) <= 1e-4

    def test_focal_gradients_over_logits_match(self):
        rng = np.random.default_rng(23)
        params = FocalParams()
        for trial in range(20):
            logits = rng.standard_normal(6) * 2.0
            targets = (rng.random(6) < 0.5).astype(np.float64)

            def fn(z):
                p = sigmoid(z)
                loss = focal_loss(p, targets, params)
                grad = focal_loss_grad(p, targets, params) * p * (1.0 - p)
                return loss, grad

            assert grad_check(fn, logits) <= 1e-4

    def test_agva_gradients_match(self):
        rng = np.random.default_rng(31)
        t, n, d, da = 2, 3, 2, 2
        w = AgvaWeights.seeded(d=d, d_a=da, d_mid=3, d_s=3, seed=41)
        f_rgb = rng.standard_normal((t, n, d))
        g_out = rng.standard_normal((t, d))

        def fn(x):
            f_a = x.reshape(t, da)
            out = agva(f_a, f_rgb, w, fps=1.0)
            grads = agva_backward(f_a, f_rgb, w, g_out)
            return float((out.data * g_out).sum()), grads["f_a"].ravel()

        assert grad_check(fn, rng.standard_normal(t * da)) <= 1e-4

    def test_agva_rgb_gradients_match(self):
        rng = np.random.default_rng(37)
        t, n, d, da = 2, 3, 2, 2
        w = AgvaWeights.seeded(d=d, d_a=da, d_mid=3, d_s=3, seed=43)
        f_a = rng.standard_normal((t, da))
        g_out = rng.standard_normal((t, d))

        def fn(x):
            f_rgb = x.reshape(t, n, d)
            out = agva(f_a, f_rgb, w, fps=1.0)
            grads = agva_backward(f_a, f_rgb, w, g_out)
            return float((out.data * g_out).sum()), grads["f_rgb"].ravel()

        assert grad_check(fn, rng.standard_normal(t * n * d)) <= 1e-4

    def test_self_attention_gradients_match(self):
        rng = np.random.default_rng(41)
        t, d = 4, 4
        w = AttnWeights.seeded(dim=d, heads=2, seed=47)
        g_out = rng.standard_normal((t, d))

        def fn(x):
            xin = x.reshape(t, d)
            out = self_attention(xin, w)
            grads = self_attention_backward(xin, w, g_out)
            return float((out * g_out).sum()), grads["x"].ravel()

        assert grad_check(fn, rng.standard_normal(t * d)) <= 1e-4


class TestTensorMap:
    def test_round_trip(self):
        arrays = {
            "w1": np.arange(6.0).reshape(2, 3),
            "b": np.array([1.5]),
            "scalar": np.array(4.0),
        }
        restored = arrays_from_tensor_map(tensor_map(arrays))
        assert set(restored) == set(arrays)
        for k in arrays:
            assert np.array_equal(restored[k], arrays[k])
            assert restored[k].shape == arrays[k].shape

    def test_agva_weights_round_trip(self):
        w = AgvaWeights.seeded(d=3, d_a=2, d_mid=4, d_s=5, seed=51)
        restored = AgvaWeights.from_tensor_map(w.to_tensor_map())
        assert np.array_equal(restored.w1, w.w1)
        assert np.array_equal(restored.urgbs.weight, w.urgbs.weight)

    def test_attn_weights_round_trip(self):
        w = AttnWeights.seeded(dim=6, heads=3, seed=53)
        restored = AttnWeights.from_tensor_map(w.to_tensor_map())
        assert restored.heads == 3
        assert np.array_equal(restored.wo, w.wo)
