"""Engine, losses and optimizer tests, including finite-difference gradient checks."""

import numpy as np
import pytest

from app.errors import NonFiniteError, ShapeError
from app.services.nn import (
    SGD,
    Affine,
    Injection,
    Model,
    ReLU,
    backward,
    encode_labels,
    forward,
    forward_to,
    loss_ce,
    loss_logistic,
    model_loss,
    predict,
    sgd_step,
)


def _soft_labels(rng, n, classes):
    raw = rng.random((n, classes))
    return raw / raw.sum(axis=1, keepdims=True)


def _relu_pattern(model, tape):
    """Sign pattern of every ReLU input."""
    return b"".join((h > 0).tobytes() for layer, h in zip(model.layers, tape.inputs) if isinstance(layer, ReLU))


def _loss_and_pattern(model, x, y, injection):
    logits, tape = forward(model, x, injection)
    return model_loss(model.class_count, logits, y)[0], _relu_pattern(model, tape)


def _relative_error(a: np.ndarray, b: np.ndarray) -> float:
    # blocks with a near-zero gradient are compared on an absolute 1e-3 scale
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-3))


class TestModel:
    def test_boundaries(self, small_model):
        assert small_model.final_boundary == 3
        assert list(small_model.mixable_boundaries) == [0, 1, 2]
        assert small_model.boundary_positions == [0, 2, 4, 5]

    def test_parameters_order(self, small_model):
        shapes = [p.shape for p in small_model.parameters()]
        assert shapes == [(4, 5), (4,), (3, 4), (3,), (3, 3), (3,)]

    def test_mismatched_layers_rejected(self):
        layers = [Affine(np.zeros((4, 5)), np.zeros(4)), ReLU(), Affine(np.zeros((3, 3)), np.zeros(3))]
        with pytest.raises(ShapeError):
            Model(layers, 5, 3)

    def test_wrong_class_count_rejected(self):
        with pytest.raises(ShapeError):
            Model([Affine(np.zeros((2, 5)), np.zeros(2))], 5, 3)

    def test_mlp_is_seeded(self):
        a = Model.mlp(5, (4,), 2, seed=7)
        b = Model.mlp(5, (4,), 2, seed=7)
        for p, q in zip(a.parameters(), b.parameters()):
            np.testing.assert_array_equal(p, q)

    def test_copy_is_independent(self, small_model):
        clone = small_model.copy()
        clone.parameters()[0][0, 0] += 1.0
        assert clone.parameters()[0][0, 0] != small_model.parameters()[0][0, 0]


class TestForward:
    def test_logits_shape(self, small_model, rng):
        logits, tape = forward(small_model, rng.random((7, 5)))
        assert logits.shape == (7, 3)
        assert len(tape.inputs) == len(small_model.layers)

    def test_forward_to_final_matches_forward(self, small_model, rng):
        x = rng.random((6, 5))
        logits, _ = forward(small_model, x)
        np.testing.assert_array_equal(forward_to(small_model, x, small_model.final_boundary), logits)

    def test_forward_to_input_is_identity(self, small_model, rng):
        x = rng.random((3, 5))
        np.testing.assert_array_equal(forward_to(small_model, x, 0), x)

    def test_identity_injection_changes_nothing(self, small_model, rng):
        x = rng.random((6, 5))
        plain, _ = forward(small_model, x)
        mixed, _ = forward(small_model, x, Injection(1, 1.0, rng.permutation(6)))
        np.testing.assert_array_equal(plain, mixed)

    def test_input_mix_matches_mixing_by_hand(self, small_model, rng):
        x = rng.random((6, 5))
        perm = rng.permutation(6)
        mixed, _ = forward(small_model, x, Injection(0, 0.3, perm))
        by_hand, _ = forward(small_model, 0.3 * x + 0.7 * x[perm])
        np.testing.assert_allclose(mixed, by_hand, rtol=1e-12, atol=1e-12)

    @pytest.mark.parametrize("c", [0.5, 2.0, 3.7])
    def test_bias_free_relu_net_is_positively_homogeneous(self, small_model, rng, c):
        assert all(not np.any(layer.b) for layer in small_model.affine_layers)
        x = rng.normal(size=(6, 5))
        logits, _ = forward(small_model, x)
        scaled, _ = forward(small_model, c * x)
        np.testing.assert_allclose(scaled, c * logits, rtol=1e-12, atol=1e-12)
        for boundary in small_model.mixable_boundaries:
            np.testing.assert_allclose(forward_to(small_model, c * x, boundary),
                                       c * forward_to(small_model, x, boundary), rtol=1e-12, atol=1e-12)

    def test_forward_is_bit_identical_across_calls_and_copies(self, small_model, rng):
        x = rng.random((9, 5))
        injection = Injection(1, 0.4, rng.permutation(9))
        first, _ = forward(small_model, x, injection)
        again, _ = forward(small_model, x.copy(), injection)
        rebuilt, _ = forward(Model.mlp(5, (4, 3), 3, seed=0), x, injection)
        assert first.tobytes() == again.tobytes() == rebuilt.tobytes()
        assert np.array_equal(predict(small_model, x), predict(small_model.copy(), x))

    def test_final_boundary_not_mixable(self, small_model, rng):
        with pytest.raises(ShapeError):
            forward(small_model, rng.random((4, 5)), Injection(3, 0.5, np.arange(4)))

    def test_permutation_must_be_bijection(self, small_model, rng):
        with pytest.raises(ShapeError):
            forward(small_model, rng.random((4, 5)), Injection(0, 0.5, np.array([0, 0, 1, 2])))

    def test_wrong_input_width(self, small_model):
        with pytest.raises(ShapeError):
            forward(small_model, np.zeros((2, 4)))

    def test_non_finite_logits(self, small_model):
        x = np.full((2, 5), np.inf)
        with pytest.raises(NonFiniteError):
            forward(small_model, x)

    def test_predict_ties_go_to_lowest_class(self):
        model = Model([Affine(np.zeros((3, 2)), np.zeros(3))], 2, 3)
        np.testing.assert_array_equal(predict(model, np.ones((4, 2))), np.zeros(4, dtype=np.int64))

    def test_predict_single_logit_thresholds_at_zero(self):
        model = Model.linear([1.0, -1.0])
        np.testing.assert_array_equal(predict(model, np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])), [1, 0, 0])


class TestBackward:
    @pytest.mark.parametrize("seed", range(100))
    def test_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        model = Model.mlp(5, (4, 3), 3, seed=seed)
        for p in model.parameters():
            p += rng.normal(scale=0.1, size=p.shape)
        x = rng.random((6, 5))
        y = _soft_labels(rng, 6, 3)
        layer = int(rng.integers(0, model.final_boundary))
        injection = Injection(layer, float(rng.random()), rng.permutation(6))

        logits, tape = forward(model, x, injection)
        pattern = _relu_pattern(model, tape)
        _, dlogits = model_loss(3, logits, y)
        grads, dx = backward(model, tape, dlogits)

        h = 1e-5
        for p, g in zip(model.parameters(), grads):
            numeric = np.zeros_like(p)
            smooth = np.ones(p.shape, dtype=bool)
            for idx in np.ndindex(p.shape):
                saved = p[idx]
                p[idx] = saved + h
                up, up_pattern = _loss_and_pattern(model, x, y, injection)
                p[idx] = saved - h
                down, down_pattern = _loss_and_pattern(model, x, y, injection)
                p[idx] = saved
                numeric[idx] = (up - down) / (2 * h)
                smooth[idx] = up_pattern == pattern == down_pattern
            assert _relative_error(g[smooth], numeric[smooth]) < 1e-5

        numeric_dx = np.zeros_like(x)
        smooth = np.ones(x.shape, dtype=bool)
        for idx in np.ndindex(x.shape):
            xp, xm = x.copy(), x.copy()
            xp[idx] += h
            xm[idx] -= h
            up, up_pattern = _loss_and_pattern(model, xp, y, injection)
            down, down_pattern = _loss_and_pattern(model, xm, y, injection)
            numeric_dx[idx] = (up - down) / (2 * h)
            smooth[idx] = up_pattern == pattern == down_pattern
        assert _relative_error(dx[smooth], numeric_dx[smooth]) < 1e-5

    def test_logistic_gradient(self, rng):
        model = Model.linear([0.3, -0.2, 0.1], bias=0.05)
        x = rng.normal(size=(5, 3))
        y = encode_labels(np.array([0, 1, 1, 0, 1]), 1)
        logits, tape = forward(model, x)
        _, dlogits = loss_logistic(logits, y)
        grads, _ = backward(model, tape, dlogits)
        sig = 1.0 / (1.0 + np.exp(-logits[:, 0]))
        np.testing.assert_allclose(grads[0][0], ((sig - y[:, 0]) / 5) @ x, rtol=1e-10)

    def test_tape_is_single_use(self, small_model, rng):
        logits, tape = forward(small_model, rng.random((3, 5)))
        backward(small_model, tape, np.ones_like(logits))
        with pytest.raises(ValueError):
            backward(small_model, tape, np.ones_like(logits))

    def test_tape_from_other_model(self, small_model, rng):
        logits, tape = forward(small_model, rng.random((3, 5)))
        with pytest.raises(ShapeError):
            backward(small_model.copy(), tape, np.ones_like(logits))


class TestLosses:
    def test_uniform_logits_cost_log_classes(self):
        loss, _ = loss_ce(np.zeros((4, 10)), encode_labels(np.arange(4), 10))
        assert loss == pytest.approx(np.log(10))

    def test_logistic_at_zero(self):
        loss, grad = loss_logistic(np.zeros((2, 1)), np.array([[0.0], [1.0]]))
        assert loss == pytest.approx(np.log(2))
        np.testing.assert_allclose(grad[:, 0], [0.25, -0.25])

    def test_cross_entropy_is_stable_for_large_logits(self):
        loss, grad = loss_ce(np.array([[1000.0, 0.0]]), np.array([[0.0, 1.0]]))
        assert loss == pytest.approx(1000.0)
        assert np.all(np.isfinite(grad))

    @pytest.mark.parametrize("labels", [[[0.5, 0.6]], [[-0.1, 1.1]], [[0.0, 0.0]]])
    def test_labels_must_be_distributions(self, labels):
        with pytest.raises(ValueError, match="soft label"):
            loss_ce(np.zeros((1, 2)), np.array(labels))

    def test_mismatched_labels(self):
        with pytest.raises(ShapeError):
            loss_ce(np.zeros((2, 3)), np.zeros((2, 2)))

    def test_encode_labels_range(self):
        with pytest.raises(ShapeError):
            encode_labels(np.array([0, 3]), 3)


class TestSGD:
    def test_momentum_update(self):
        model = Model([Affine(np.array([[1.0]]), np.array([0.0]))], 1, 1)
        grads = [np.array([[1.0]]), np.array([2.0])]
        state = sgd_step(model, grads, lr=0.1, momentum=0.9)
        np.testing.assert_allclose(model.parameters()[0], [[0.9]])
        sgd_step(model, grads, lr=0.1, momentum=0.9, state=state)
        # v = 0.9 * 1 + 1 = 1.9
        np.testing.assert_allclose(model.parameters()[0], [[0.9 - 0.19]])
        np.testing.assert_allclose(model.parameters()[1], [-0.2 - 0.38])

    def test_non_finite_gradient_leaves_model_untouched(self, small_model):
        before = [p.copy() for p in small_model.parameters()]
        grads = [np.zeros_like(p) for p in small_model.parameters()]
        grads[2][0, 0] = np.nan
        with pytest.raises(NonFiniteError):
            SGD(small_model, 0.1, 0.9).step(grads)
        for p, q in zip(small_model.parameters(), before):
            np.testing.assert_array_equal(p, q)

    def test_shape_mismatch(self, small_model):
        grads = [np.zeros((1, 1)) for _ in small_model.parameters()]
        with pytest.raises(ShapeError):
            sgd_step(small_model, grads, 0.1, 0.0)
