import numpy as np
import pytest

from app.errors import ShapeError
from app.services.attacks import AttackConfig, fgsm, generate, input_gradient, pgd, project_linf
from app.services.nn import Model, encode_labels, forward_to, model_loss_terms


@pytest.fixture
def linear():
    return Model.linear([0.5, -1.0, 0.0, 2.0])


class TestAttackConfig:
    def test_descriptions(self):
        assert AttackConfig.fgsm(0.1).describe() == "fgsm"
        assert AttackConfig.pgd(0.1, 0.01, 7).describe() == "pgd7"
        assert AttackConfig.pgd(0.1, 0.1, 1).is_fgsm_equivalent

    @pytest.mark.parametrize("kwargs", [
        dict(epsilon=-0.1, step_size=0.1),
        dict(epsilon=0.1, step_size=0.0),
        dict(epsilon=0.1, step_size=0.1, iterations=0),
        dict(epsilon=0.1, step_size=0.1, bounds=(1.0, 0.0)),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            AttackConfig(**kwargs)


class TestFgsm:
    def test_moves_against_the_label(self, linear):
        x = np.full((1, 4), 0.5)
        y = encode_labels(np.array([1]), 1)
        x_adv = fgsm(linear, x, y, AttackConfig.fgsm(0.1))
        # y = 1: the loss gradient points along -w; sgn(0) = 0 leaves that coordinate alone
        np.testing.assert_allclose(x_adv, [[0.4, 0.6, 0.5, 0.4]])

    def test_respects_bounds(self, linear):
        x = np.array([[0.0, 1.0, 0.5, 0.02]])
        x_adv = fgsm(linear, x, encode_labels(np.array([1]), 1), AttackConfig.fgsm(0.1))
        assert x_adv.min() >= 0.0 and x_adv.max() <= 1.0
        np.testing.assert_allclose(x_adv, [[0.0, 1.0, 0.5, 0.0]])

    def test_zero_epsilon_returns_a_copy(self, linear):
        x = np.full((2, 4), 0.3)
        x_adv = fgsm(linear, x, encode_labels(np.array([0, 1]), 1), AttackConfig.fgsm(0.0))
        np.testing.assert_array_equal(x_adv, x)
        assert x_adv is not x

    def test_increases_every_convex_loss(self, linear, rng):
        x = rng.random((20, 4))
        y = encode_labels(rng.integers(0, 2, 20), 1)
        x_adv = fgsm(linear, x, y, AttackConfig.fgsm(0.05, bounds=(-np.inf, np.inf)))
        clean = model_loss_terms(1, forward_to(linear, x, 1), y)
        adv = model_loss_terms(1, forward_to(linear, x_adv, 1), y)
        assert np.all(adv >= clean)


class TestPgd:
    def test_single_full_step_equals_fgsm(self, small_model, rng):
        x = rng.random((10, 5))
        y = encode_labels(rng.integers(0, 3, 10), 3)
        one_step = pgd(small_model, x, y, AttackConfig(0.1, 0.1, 1))
        np.testing.assert_array_equal(one_step, fgsm(small_model, x, y, AttackConfig.fgsm(0.1)))

    @pytest.mark.parametrize("random_start", [False, True])
    def test_stays_in_ball_and_bounds(self, small_model, rng, random_start):
        x = rng.random((12, 5))
        y = encode_labels(rng.integers(0, 3, 12), 3)
        cfg = AttackConfig.pgd(0.07, 0.02, 10, random_start=random_start)
        x_adv = pgd(small_model, x, y, cfg, rng)
        assert np.max(np.abs(x_adv - x)) <= 0.07 + 1e-12
        assert x_adv.min() >= 0.0 and x_adv.max() <= 1.0

    def test_random_start_needs_rng(self, small_model, rng):
        x = rng.random((2, 5))
        y = encode_labels(np.array([0, 1]), 3)
        with pytest.raises(ValueError):
            pgd(small_model, x, y, AttackConfig.pgd(0.1, 0.01, 3, random_start=True))

    def test_model_is_untouched(self, small_model, rng):
        before = [p.copy() for p in small_model.parameters()]
        x = rng.random((4, 5))
        generate(small_model, x, encode_labels(np.array([0, 1, 2, 0]), 3), AttackConfig.pgd(0.1, 0.02, 5))
        for p, q in zip(small_model.parameters(), before):
            np.testing.assert_array_equal(p, q)

    def test_unbounded_domain(self, linear):
        x = np.array([[5.0, -3.0, 0.0, 10.0]])
        cfg = AttackConfig.pgd(0.2, 0.05, 8, bounds=(-np.inf, np.inf))
        x_adv = generate(linear, x, encode_labels(np.array([1]), 1), cfg)
        np.testing.assert_allclose(x_adv, [[4.8, -2.8, 0.0, 9.8]])


class TestHelpers:
    def test_project_clamps_to_ball_then_bounds(self):
        origin = np.array([[0.5, 0.95]])
        candidate = np.array([[0.9, 1.2]])
        np.testing.assert_allclose(project_linf(candidate, origin, 0.1, (0.0, 1.0)), [[0.6, 1.0]])

    def test_project_shape_mismatch(self):
        with pytest.raises(ShapeError):
            project_linf(np.zeros((1, 2)), np.zeros((1, 3)), 0.1, (0.0, 1.0))

    def test_input_gradient_of_linear_model(self, linear):
        x = np.zeros((1, 4))
        grad = input_gradient(linear, x, encode_labels(np.array([0]), 1))
        # sigma(0) - 0 = 1/2
        np.testing.assert_allclose(grad, [[0.25, -0.5, 0.0, 1.0]])
