import numpy as np
import pytest

from app.services.mix import DTilde, MixDraw, MixPolicy, make_draw, mix_labels, mixed_loss, sample_lambdas
from app.services.nn import Injection, encode_labels, forward, model_loss


class TestPolicy:
    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            MixPolicy(mode="cutmix")

    def test_non_positive_shapes(self):
        with pytest.raises(ValueError):
            MixPolicy(mode="input", alpha=0.0)

    def test_manifold_needs_layers(self):
        with pytest.raises(ValueError):
            MixPolicy(mode="manifold", eligible_layers=frozenset())


class TestSampling:
    def test_beta_mean(self):
        lam = sample_lambdas(2.0, 5.0, np.random.default_rng(0), 200_000)
        assert lam.min() >= 0.0 and lam.max() <= 1.0
        assert lam.mean() == pytest.approx(2.0 / 7.0, abs=3e-3)

    def test_tiny_shapes_stay_in_range(self):
        lam = sample_lambdas(1e-3, 1e-3, np.random.default_rng(0), 1000)
        assert np.all(np.isfinite(lam))
        assert lam.min() >= 0.0 and lam.max() <= 1.0

    def test_same_seed_same_draws(self):
        a = sample_lambdas(0.4, 0.4, np.random.default_rng(3), 10)
        b = sample_lambdas(0.4, 0.4, np.random.default_rng(3), 10)
        np.testing.assert_array_equal(a, b)


class TestDraw:
    def test_mode_none_is_identity_and_consumes_nothing(self, rng):
        state = rng.bit_generator.state
        draw = make_draw(MixPolicy(mode="none"), 8, rng)
        assert draw.is_identity
        assert draw.injection() is None
        assert rng.bit_generator.state == state

    def test_input_mode_mixes_at_the_input(self, rng):
        draw = make_draw(MixPolicy(mode="input"), 8, rng)
        assert draw.layer_index == 0
        np.testing.assert_array_equal(np.sort(draw.permutation), np.arange(8))

    def test_manifold_mode_picks_eligible_layers(self, rng):
        policy = MixPolicy(mode="manifold", eligible_layers=frozenset({1, 2}))
        layers = {make_draw(policy, 4, rng).layer_index for _ in range(50)}
        assert layers == {1, 2}

    def test_manifold_layers_are_uniform(self):
        policy = MixPolicy(mode="manifold", eligible_layers=frozenset({0, 1, 2}))
        rng = np.random.default_rng(0)
        layers = np.array([make_draw(policy, 4, rng).layer_index for _ in range(10_000)])
        for k in (0, 1, 2):
            assert np.mean(layers == k) == pytest.approx(1.0 / 3.0, abs=0.02)

    def test_batch_of_one_rejected(self, rng):
        with pytest.raises(ValueError):
            make_draw(MixPolicy(mode="input"), 1, rng)

    def test_invalid_draws(self):
        with pytest.raises(ValueError):
            MixDraw(1.5, np.arange(3))
        with pytest.raises(ValueError):
            MixDraw(0.5, np.array([0, 0, 2]))


class TestMixedLoss:
    def test_labels_mix_linearly(self):
        y = encode_labels(np.array([0, 1, 2]), 3)
        mixed = mix_labels(y, MixDraw(0.25, np.array([1, 2, 0])))
        np.testing.assert_allclose(mixed[0], [0.25, 0.75, 0.0])
        np.testing.assert_allclose(mixed.sum(axis=1), 1.0)

    def test_equals_weighted_loss_pair(self, small_model, rng):
        x = rng.random((6, 5))
        y = encode_labels(rng.integers(0, 3, 6), 3)
        draw = MixDraw(0.3, rng.permutation(6), 1)
        result = mixed_loss(small_model, x, y, draw)
        logits, _ = forward(small_model, x, Injection(1, 0.3, draw.permutation))
        expected = 0.3 * model_loss(3, logits, y)[0] + 0.7 * model_loss(3, logits, y[draw.permutation])[0]
        assert result.loss == pytest.approx(expected, rel=1e-12)

    def test_identity_draw_is_plain_loss(self, small_model, rng):
        x = rng.random((4, 5))
        y = encode_labels(np.array([0, 1, 2, 1]), 3)
        result = mixed_loss(small_model, x, y, MixDraw(1.0, np.arange(4)))
        assert result.loss == model_loss(3, forward(small_model, x)[0], y)[0]


    @pytest.mark.parametrize("layer", [0, 1, 2])
    def test_swapping_lambda_and_pairing_gives_the_same_batch(self, small_model, rng, layer):
        x = rng.random((6, 5))
        y = encode_labels(rng.integers(0, 3, 6), 3)
        perm = rng.permutation(6)
        draw = MixDraw(0.25, perm, layer)
        swapped = MixDraw(0.75, np.argsort(perm), layer)
        a = mixed_loss(small_model, x, y, draw)
        b = mixed_loss(small_model, x[perm], y[perm], swapped)
        assert a.loss == pytest.approx(b.loss, rel=1e-12)
        np.testing.assert_allclose(a.dlogits, b.dlogits, rtol=1e-10, atol=1e-15)
        np.testing.assert_array_equal(mix_labels(y, draw), mix_labels(y[perm], swapped))

    def test_input_mix_stays_on_the_segment(self, small_model, rng):
        x = rng.random((8, 5))
        y = encode_labels(rng.integers(0, 3, 8), 3)
        policy = MixPolicy(mode="input", alpha=0.4, beta=0.4)
        for _ in range(50):
            draw = make_draw(policy, 8, rng)
            _, tape = forward(small_model, x, draw.injection())
            mixed = tape.inputs[0]
            partner = x[draw.permutation]
            assert np.all(mixed >= np.minimum(x, partner) - 1e-12)
            assert np.all(mixed <= np.maximum(x, partner) + 1e-12)
            labels = mix_labels(y, draw)
            assert labels.min() >= 0.0 and labels.max() <= 1.0
            np.testing.assert_allclose(labels.sum(axis=1), 1.0)

    def test_non_distribution_labels_rejected(self):
        y = np.array([[2.0, 0.0], [0.0, 1.0]])
        with pytest.raises(ValueError, match="soft label"):
            mix_labels(y, MixDraw(0.5, np.array([1, 0])))


class TestDTilde:
    def test_weights_and_components(self):
        d = DTilde(1.0, 3.0)
        assert d.weights == (0.25, 0.75)
        assert d.components == ((2.0, 3.0), (4.0, 1.0))

    def test_uniform_moments(self):
        # alpha = beta = 1: 1 - lam ~ Beta(1, 2)
        d = DTilde(1.0, 1.0)
        assert d.moment_one_minus(1) == pytest.approx(1.0 / 3.0)
        assert d.moment_one_minus(2) == pytest.approx(1.0 / 6.0)
        assert d.mean == pytest.approx(2.0 / 3.0)

    def test_scaling_is_homogeneous(self):
        d = DTilde(0.5, 2.0)
        assert d.moment_one_minus(3, scale=0.5) == pytest.approx(0.125 * d.moment_one_minus(3))

    @pytest.mark.parametrize("alpha,beta", [(1.0, 1.0), (0.5, 2.0), (2.0, 0.5)])
    def test_samples_match_closed_form(self, alpha, beta):
        d = DTilde(alpha, beta)
        lam = d.sample(np.random.default_rng(11), 200_000, scale=0.5)
        one_minus = 1.0 - lam
        assert lam.min() >= 0.5 and lam.max() <= 1.0
        assert one_minus.mean() == pytest.approx(d.moment_one_minus(1, 0.5), abs=2e-3)
        assert (one_minus ** 2).mean() == pytest.approx(d.moment_one_minus(2, 0.5), abs=2e-3)

    @pytest.mark.parametrize("alpha,beta", [(1.0, 1.0), (0.5, 2.0), (2.0, 0.5), (3.0, 1.0)])
    def test_reweights_the_mixing_law(self, alpha, beta):
        # E[lam phi(lam) + (1 - lam) phi(1 - lam)] over Beta(alpha, beta) is E[phi] over DTilde
        def phi(t):
            return np.cos(3.0 * t) + t ** 2

        rng = np.random.default_rng(5)
        lam = sample_lambdas(alpha, beta, rng, 400_000)
        lhs = np.mean(lam * phi(lam) + (1.0 - lam) * phi(1.0 - lam))
        rhs = np.mean(phi(DTilde(alpha, beta).sample(rng, 400_000)))
        assert lhs == pytest.approx(rhs, abs=5e-3)

    @pytest.mark.parametrize("alpha,beta", [(1.0, 3.0), (0.5, 0.5), (2.0, 5.0)])
    def test_reweighting_in_closed_form(self, alpha, beta):
        # phi(t) = (1 - t)^2 turns the left side into E[lam (1 - lam)]
        expected = alpha * beta / ((alpha + beta) * (alpha + beta + 1.0))
        assert DTilde(alpha, beta).moment_one_minus(2) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
    def test_symmetric_law_weights_by_alpha_share(self, alpha):
        rng = np.random.default_rng(8)
        lam = sample_lambdas(alpha, alpha, rng, 400_000)
        lhs = np.mean(lam * np.sin(2.0 * lam))
        rhs = np.mean(np.sin(2.0 * DTilde(alpha, alpha).sample(rng, 400_000))) * alpha / (alpha + alpha)
        assert lhs == pytest.approx(rhs, abs=3e-3)
