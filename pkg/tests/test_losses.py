import numpy as np
import pytest

from tumorseg.errors import ConfigurationError, ValidationError
from tumorseg.losses import PROB_CLAMP, FocalParams, focal_loss, focal_loss_gradient


def bce_mean(pred, target):
    """Independent cross-entropy oracle with the same probability clamp."""
    p = np.clip(np.asarray(pred, dtype=np.float64), PROB_CLAMP, 1.0 - PROB_CLAMP)
    t = np.asarray(target, dtype=np.float64)
    return float(np.mean(-(t * np.log(p) + (1.0 - t) * np.log(1.0 - p))))


def central_differences(pred, target, params, step=1e-5):
    """Finite-difference oracle for the gradient of the mean focal loss."""
    pred = np.asarray(pred, dtype=np.float64)
    grad = np.zeros_like(pred)
    flat = pred.reshape(-1)
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] = flat[i] + step
        hi = focal_loss(bumped.reshape(pred.shape), target, params)
        bumped[i] = flat[i] - step
        lo = focal_loss(bumped.reshape(pred.shape), target, params)
        grad.reshape(-1)[i] = (hi - lo) / (2.0 * step)
    return grad


def random_inputs(rng, shape=(8, 8)):
    pred = rng.uniform(0.02, 0.98, size=shape)
    target = (rng.random(shape) < 0.3).astype(np.uint8)
    return pred, target


def test_scalar_value_matches_hand_derivation():
    # single foreground pixel: 0.25 * (1 - 0.9)^2 * (-log 0.9)
    expected = 0.25 * 0.1**2 * -np.log(0.9)
    got = focal_loss(np.array([0.9]), np.array([1]), FocalParams(alpha=0.25, gamma=2.0))
    assert got == pytest.approx(expected, abs=1e-15)
    assert got == pytest.approx(2.6341e-4, abs=1e-8)


def test_gamma_zero_alpha_one_is_cross_entropy():
    rng = np.random.default_rng(11)
    params = FocalParams(alpha=1.0, gamma=0.0)
    for _ in range(50):
        pred, target = random_inputs(rng, shape=(4, 6))
        assert focal_loss(pred, target, params) == pytest.approx(
            bce_mean(pred, target), abs=1e-12
        )


def test_perfect_prediction_is_near_zero():
    target = np.ones((4, 4), dtype=np.uint8)
    pred = np.ones((4, 4))  # clamped to 1 - PROB_CLAMP internally
    params = FocalParams(alpha=0.25, gamma=2.0)
    bound = 0.25 * PROB_CLAMP**2 * -np.log(1.0 - PROB_CLAMP)
    assert 0.0 <= focal_loss(pred, target, params) <= bound


def test_non_negative_on_random_inputs():
    rng = np.random.default_rng(3)
    for params in (FocalParams(0.25, 2.0), FocalParams(2.0, 0.75), FocalParams(1.0, 0.0)):
        for _ in range(20):
            pred, target = random_inputs(rng)
            assert focal_loss(pred, target, params) >= 0.0


def test_monotone_decreasing_in_confidence():
    # single foreground pixel: loss strictly decreases as pred rises
    params = FocalParams(0.25, 2.0)
    grid = np.linspace(0.01, 0.99, 50)
    values = [focal_loss(np.array([p]), np.array([1]), params) for p in grid]
    assert all(a > b for a, b in zip(values, values[1:]))
    # background pixel: dual direction
    values = [focal_loss(np.array([p]), np.array([0]), params) for p in grid]
    assert all(a < b for a, b in zip(values, values[1:]))


def test_gamma_damps_well_classified_pixels():
    rng = np.random.default_rng(4)
    pred = rng.uniform(0.55, 0.99, size=(6, 6))  # p_t > 0.5 everywhere
    target = np.ones((6, 6), dtype=np.uint8)
    gammas = [0.0, 0.5, 1.0, 2.0, 4.0]
    values = [focal_loss(pred, target, FocalParams(1.0, g)) for g in gammas]
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_alpha_enters_linearly():
    rng = np.random.default_rng(5)
    pred, target = random_inputs(rng)
    lo = focal_loss(pred, target, FocalParams(0.5, 2.0))
    hi = focal_loss(pred, target, FocalParams(1.0, 2.0))
    assert hi == pytest.approx(2.0 * lo, rel=1e-12)


def test_gradient_matches_bce_gradient_at_gamma_zero():
    rng = np.random.default_rng(6)
    pred, target = random_inputs(rng)
    grad = focal_loss_gradient(pred, target, FocalParams(1.0, 0.0))
    expected = (pred - target) / (pred * (1.0 - pred)) / pred.size
    np.testing.assert_allclose(grad, expected, rtol=1e-10)


@pytest.mark.parametrize("alpha,gamma", [(0.25, 2.0), (2.0, 0.75), (1.0, 0.0)])
def test_gradient_matches_finite_differences(alpha, gamma):
    rng = np.random.default_rng(7)
    pred, target = random_inputs(rng)
    params = FocalParams(alpha, gamma)
    analytic = focal_loss_gradient(pred, target, params)
    numeric = central_differences(pred, target, params)
    rel = np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1e-12)
    assert rel.max() < 1e-3


def test_uniform_inputs_give_uniform_gradient():
    pred = np.full((8, 8), 0.5)
    target = np.ones((8, 8), dtype=np.uint8)
    grad = focal_loss_gradient(pred, target, FocalParams(0.25, 2.0))
    assert np.all(grad == grad[0, 0])


def test_class_balanced_weighting():
    pred = np.array([0.7, 0.7])
    target = np.array([1, 0])
    params = FocalParams(alpha=0.25, gamma=2.0, class_balanced=True)
    fg = 0.25 * (1 - 0.7) ** 2 * -np.log(0.7)
    bg = 0.75 * 0.7**2 * -np.log(0.3)
    assert focal_loss(pred, target, params) == pytest.approx((fg + bg) / 2, rel=1e-12)
    # gradient stays consistent with the value it differentiates
    rng = np.random.default_rng(8)
    p, t = random_inputs(rng, shape=(5, 5))
    analytic = focal_loss_gradient(p, t, params)
    numeric = central_differences(p, t, params)
    rel = np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1e-12)
    assert rel.max() < 1e-3


def test_input_contracts():
    params = FocalParams(0.25, 2.0)
    with pytest.raises(ValueError):
        focal_loss(np.zeros((2, 2)), np.zeros((2, 3)), params)
    with pytest.raises(ValidationError):
        focal_loss(np.full((2, 2), 0.5), np.full((2, 2), 0.5), params)
    with pytest.raises(ValueError):
        focal_loss_gradient(np.zeros((2, 2)), np.zeros((3, 2)), params)


def test_param_validation():
    with pytest.raises(ConfigurationError):
        FocalParams(alpha=0.0)
    with pytest.raises(ConfigurationError):
        FocalParams(alpha=0.25, gamma=-0.1)
    with pytest.raises(ConfigurationError):
        FocalParams(alpha=2.0, gamma=1.0, class_balanced=True)
