import numpy as np
import pytest

from fishnet import ParamState, SgdConfig, sgd_step


def test_zero_gradient_zero_velocity_is_fixed_point():
    w = np.array([1.0, -2.0, 3.0])
    state = ParamState([w])
    cfg = SgdConfig(weight_decay=0.0)
    sgd_step(state, [np.zeros(3)], cfg)
    assert np.array_equal(state.params[0], [1.0, -2.0, 3.0])


def test_single_step_with_paper_hyperparameters():
    # v = -lr * (g + wd * w) = -0.01 * (1 + 1e-6) ; w = 1 + v
    state = ParamState([np.array([1.0])])
    cfg = SgdConfig(lr=0.01, momentum=0.8, weight_decay=1e-6)
    sgd_step(state, [np.array([1.0])], cfg)
    assert np.isclose(state.velocities[0][0], -0.01000001, rtol=0, atol=1e-15)
    assert np.isclose(state.params[0][0], 0.98999999, rtol=0, atol=1e-15)


def test_two_steps_constant_gradient_momentum_recursion():
    state = ParamState([np.array([1.0])])
    cfg = SgdConfig(lr=0.01, momentum=0.8, weight_decay=0.0)
    g = [np.array([1.0])]
    sgd_step(state, g, cfg)
    assert np.isclose(state.params[0][0], 0.99, rtol=0, atol=1e-15)
    sgd_step(state, g, cfg)
    # v2 = 0.8 * (-0.01) - 0.01 = -0.018 ; w moves 0.01 then 0.018
    assert np.isclose(state.velocities[0][0], -0.018, rtol=0, atol=1e-15)
    assert np.isclose(state.params[0][0], 0.972, rtol=0, atol=1e-15)


def test_no_momentum_no_decay_reduces_to_plain_sgd():
    rng = np.random.default_rng(0)
    w = rng.standard_normal(5)
    g = rng.standard_normal(5)
    expected = w - 0.05 * g
    state = ParamState([w.copy()])
    sgd_step(state, [g], SgdConfig(lr=0.05, momentum=0.0, weight_decay=0.0))
    assert np.allclose(state.params[0], expected, rtol=0, atol=1e-16)


def test_quadratic_converges_monotonically_within_2000_steps():
    # L = w^2 / 2 so grad = w; the update spirals |w| down to ~0
    state = ParamState([np.array([1.0])])
    cfg = SgdConfig()  # lr 0.01, momentum 0.8, wd 1e-6
    previous = 1.0
    steps = 0
    for steps in range(1, 2001):
        sgd_step(state, [state.params[0].copy()], cfg)
        current = abs(float(state.params[0][0]))
        assert current <= previous + 1e-15
        previous = current
        if current < 1e-6:
            break
    assert previous < 1e-6
    assert steps < 2000


def test_velocity_persists_across_steps():
    state = ParamState([np.array([0.0])])
    cfg = SgdConfig(lr=0.1, momentum=0.5, weight_decay=0.0)
    sgd_step(state, [np.array([1.0])], cfg)
    v1 = state.velocities[0].copy()
    sgd_step(state, [np.array([0.0])], cfg)
    # with zero gradient the velocity is exactly momentum * v1
    assert np.isclose(state.velocities[0][0], 0.5 * v1[0], rtol=0, atol=1e-16)


def test_shape_mismatch_rejected():
    state = ParamState([np.zeros((2, 2))])
    with pytest.raises(ValueError):
        sgd_step(state, [np.zeros(3)], SgdConfig())
    with pytest.raises(ValueError):
        sgd_step(state, [], SgdConfig())


def test_param_state_validation():
    with pytest.raises(ValueError):
        ParamState([np.zeros(3)], [np.zeros(2)])
    state = ParamState([np.zeros((2, 3))])
    assert state.velocities[0].shape == (2, 3)
    assert np.array_equal(state.velocities[0], np.zeros((2, 3)))


def test_sgd_config_validation():
    with pytest.raises(ValueError):
        SgdConfig(lr=0.0)
    with pytest.raises(ValueError):
        SgdConfig(momentum=1.0)
    with pytest.raises(ValueError):
        SgdConfig(weight_decay=-1e-9)
    with pytest.raises(ValueError):
        SgdConfig(batch_size=0)
