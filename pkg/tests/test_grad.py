"""Gradient tests: the analytic backward pass against central differences,
plus structural properties (descent direction, degenerate inputs)."""

import numpy as np
import pytest

from moecert.grad import (
    ParamGradients,
    finite_difference_check,
    finite_difference_gradients,
    loss_and_gradients,
    max_relative_error,
)
from moecert.model import LdpConfig, mixture_risk
from moecert.numerics import RandomSource
from moecert.train import init_model


def make_batch(rng, m=12, d=3):
    X = rng.normal(size=(m, d)) * 2.0
    y = np.where(rng.uniform(size=m) < 0.5, 1.0, -1.0)
    return X, y


def randomize_biases(model, rng, scale=0.3):
    """Zero-init biases put some inputs exactly on the f0 = 0 singular point
    (all hidden units inactive), where the projected logits jump; generic
    biases keep the loss smooth around the model."""
    model.gating.b1 += rng.normal(scale=scale, size=model.gating.b1.shape)
    model.gating.b2 += rng.normal(scale=scale, size=model.gating.b2.shape)
    model.gating.b3 += rng.normal(scale=scale, size=model.gating.b3.shape)
    return model


class TestLossValue:
    def test_loss_equals_mixture_risk(self, rng):
        m = init_model(d=3, n=4, ldp=LdpConfig.constrained(2.0), rng=rng, hidden=6)
        X, y = make_batch(rng)
        loss, _ = loss_and_gradients(m, X, y)
        assert loss == pytest.approx(mixture_risk(m, X, y), rel=1e-13)


class TestFullFiniteDifference:
    @pytest.mark.parametrize("ldp", [LdpConfig.unconstrained(), LdpConfig.constrained(1.5)])
    def test_every_coordinate_agrees(self, rng, ldp):
        model = randomize_biases(init_model(d=3, n=3, ldp=ldp, rng=rng, hidden=4), rng)
        X, y = make_batch(rng, m=8)
        _, analytic = loss_and_gradients(model, X, y)
        numeric = finite_difference_gradients(model, X, y, step=1e-6)
        assert max_relative_error(analytic, numeric) < 1e-7

    def test_agrees_after_some_training_steps(self, rng):
        # gradients should stay correct away from the initialization point
        model = init_model(d=3, n=3, ldp=LdpConfig.constrained(3.0), rng=rng, hidden=4)
        X, y = make_batch(rng, m=10)
        for _ in range(25):
            _, g = loss_and_gradients(model, X, y)
            for name, arr in (
                ("expert_weights", model.experts.weights),
                ("W1", model.gating.W1), ("b1", model.gating.b1),
                ("W2", model.gating.W2), ("b2", model.gating.b2),
                ("W3", model.gating.W3), ("b3", model.gating.b3),
            ):
                arr -= 0.5 * g.as_dict()[name]
        _, analytic = loss_and_gradients(model, X, y)
        numeric = finite_difference_gradients(model, X, y, step=1e-6)
        assert max_relative_error(analytic, numeric) < 1e-7


class TestFiniteDifferenceCheck:
    def test_sampled_check_small(self, rng):
        model = randomize_biases(
            init_model(d=4, n=5, ldp=LdpConfig.constrained(2.0), rng=rng, hidden=8), rng
        )
        X, y = make_batch(rng, m=16, d=4)
        err = finite_difference_check(model, X, y, num_coords=40, rng=rng)
        assert err <= 1e-5

    def test_all_coords_when_unsampled(self, rng):
        model = randomize_biases(
            init_model(d=2, n=2, ldp=LdpConfig.unconstrained(), rng=rng, hidden=3), rng
        )
        X, y = make_batch(rng, m=6, d=2)
        err = finite_difference_check(model, X, y)
        assert err <= 1e-6

    def test_sampling_without_rng_rejected(self, rng):
        model = init_model(d=2, n=2, ldp=LdpConfig.unconstrained(), rng=rng, hidden=3)
        X, y = make_batch(rng, m=4, d=2)
        with pytest.raises(ValueError):
            finite_difference_check(model, X, y, num_coords=3)

    def test_bad_step_rejected(self, rng, small_model):
        X, y = make_batch(rng, m=4)
        with pytest.raises(ValueError):
            finite_difference_check(small_model, X, y, step=0.0)

    def test_detects_a_wrong_gradient(self, rng):
        # negative control: corrupting the model after the analytic pass
        # must produce a large disagreement, otherwise the check is toothless
        model = init_model(d=3, n=3, ldp=LdpConfig.unconstrained(), rng=rng, hidden=4)
        X, y = make_batch(rng, m=8)
        _, analytic = loss_and_gradients(model, X, y)
        wrong = ParamGradients(**{k: -v for k, v in analytic.as_dict().items()})
        numeric = finite_difference_gradients(model, X, y)
        assert max_relative_error(wrong, numeric) > 0.1


class TestGradientStructure:
    def test_step_against_gradient_decreases_loss(self, rng):
        model = randomize_biases(
            init_model(d=3, n=4, ldp=LdpConfig.constrained(2.0), rng=rng, hidden=6), rng
        )
        X, y = make_batch(rng, m=30)
        loss0, g = loss_and_gradients(model, X, y)
        lr = 1e-3
        model.experts.weights -= lr * g.expert_weights
        model.gating.W1 -= lr * g.W1
        model.gating.b1 -= lr * g.b1
        model.gating.W2 -= lr * g.W2
        model.gating.b2 -= lr * g.b2
        model.gating.W3 -= lr * g.W3
        model.gating.b3 -= lr * g.b3
        loss1, _ = loss_and_gradients(model, X, y)
        assert loss1 < loss0

    def test_all_hidden_units_dead_gives_uniform_logits_and_no_gate_gradient(self, rng):
        # pushing b1 far negative deactivates every ReLU unit, so f0 = tanh(0)
        # is exactly zero: the projection returns zero logits by convention and
        # no gradient flows through the gate body (only b3 keeps a gradient)
        model = init_model(d=3, n=4, ldp=LdpConfig.constrained(2.0), rng=rng, hidden=5)
        model.gating.b1 -= 50.0
        X, y = make_batch(rng, m=10)
        loss, g = loss_and_gradients(model, X, y)
        assert np.isfinite(loss)
        for name in ("W1", "b1", "W2", "b2", "W3"):
            np.testing.assert_array_equal(g.as_dict()[name], 0.0)
        assert np.any(g.b3 != 0.0)

    def test_zero_norm_rows_contribute_no_expert_gradient(self, rng):
        model = init_model(d=3, n=3, ldp=LdpConfig.unconstrained(), rng=rng, hidden=4)
        X = np.zeros((4, 3))
        y = np.array([1.0, -1.0, 1.0, -1.0])
        loss, g = loss_and_gradients(model, X, y)
        assert loss == pytest.approx(0.5)
        np.testing.assert_array_equal(g.expert_weights, 0.0)

    def test_b3_gradient_sums_to_zero(self, rng):
        # shifting every gate bias equally cannot change the softmax, so the
        # gradient must be orthogonal to the all-ones direction
        model = init_model(d=3, n=6, ldp=LdpConfig.constrained(1.0), rng=rng, hidden=4)
        X, y = make_batch(rng, m=20)
        _, g = loss_and_gradients(model, X, y)
        assert abs(g.b3.sum()) < 1e-14

    def test_w3_gradient_orthogonal_to_w3_when_constrained(self, rng):
        # boxed logits are invariant to rescaling W3, so the loss has zero
        # directional derivative along W3 itself
        model = init_model(d=3, n=4, ldp=LdpConfig.constrained(2.0), rng=rng, hidden=5)
        X, y = make_batch(rng, m=15)
        _, g = loss_and_gradients(model, X, y)
        inner = float(np.sum(g.W3 * model.gating.W3))
        assert abs(inner) < 1e-12

    def test_gradients_match_loop_reference(self, rng):
        # independent oracle: risk gradient assembled example by example from
        # the definition, with numerical differentiation only at the end
        model = randomize_biases(
            init_model(d=2, n=3, ldp=LdpConfig.constrained(2.0), rng=rng, hidden=3), rng
        )
        X, y = make_batch(rng, m=5, d=2)
        _, analytic = loss_and_gradients(model, X, y)
        numeric = finite_difference_gradients(model, X, y, step=2e-6)
        for name, a in analytic.as_dict().items():
            np.testing.assert_allclose(a, numeric.as_dict()[name], atol=5e-8)
