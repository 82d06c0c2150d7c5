import numpy as np
import pytest
import torch

from utils.activation_utils import (ACTIVATIONS, act_deriv1, act_deriv2, act_value, activation_bundle,
                                    kink_points)
from utils.check_utils import check_activations


def test_hand_values():
    assert act_value('srelu', 0.5) == 0.25
    assert act_value('srelu', -1.0) == 0.0
    assert act_value('srelu', 2.0) == 0.0
    assert act_value('srelu3', 0.5) == 0.015625
    assert act_value('relu', -3.0) == 0.0
    assert act_value('relu', 2.5) == 2.5


def test_hand_derivatives():
    assert act_deriv1('srelu', 0.25) == 0.5
    assert act_deriv2('srelu', 0.5) == -2.0
    assert act_deriv1('srelu2', 0.5) == 0.0
    assert act_deriv2('relu', 5.0) == 0.0


def test_right_limit_at_kinks():
    assert act_deriv1('relu', 0.0) == 1.0
    assert act_deriv1('srelu', 0.0) == 1.0
    assert act_deriv1('srelu', 1.0) == 0.0
    assert act_deriv2('srelu', 0.0) == -2.0
    assert act_deriv2('srelu', 1.0) == 0.0


def test_srelu_symmetry_and_support():
    # dyadic points so that 1 - x is exact
    x = np.linspace(-1, 2, 193)
    np.testing.assert_array_equal(act_value('srelu', x), act_value('srelu', 1 - x))
    for kind in ['srelu', 'srelu2', 'srelu3']:
        values = act_value(kind, x)
        assert np.all(values >= 0)
        assert np.all(values[(x <= 0) | (x >= 1)] == 0)
    assert act_value('srelu', x).max() == 0.25


def test_powers():
    x = np.random.default_rng(0).uniform(-0.5, 1.5, 200)
    s = act_value('srelu', x)
    np.testing.assert_allclose(act_value('srelu2', x), s ** 2, rtol=1e-15)
    np.testing.assert_allclose(act_value('srelu3', x), s ** 3, rtol=1e-15)


def test_smoothness_of_powers():
    # sReLU2 has a continuous first derivative, sReLU3 a continuous second derivative
    h = 1e-9
    for kink in [0., 1.]:
        assert act_deriv1('srelu2', kink - h) == pytest.approx(act_deriv1('srelu2', kink + h), abs=1e-8)
        assert act_deriv2('srelu3', kink - h) == pytest.approx(act_deriv2('srelu3', kink + h), abs=1e-8)
    # while sReLU itself jumps
    assert act_deriv1('srelu', -h) == 0.0
    assert act_deriv1('srelu', h) == pytest.approx(1.0)


def test_finite_differences(gen):
    result, = check_activations(gen)
    assert result['passed'], result


def test_array_and_tensor_inputs():
    x = np.array([0.25, 0.5])
    np.testing.assert_allclose(act_value('srelu', x), [0.1875, 0.25])
    t = torch.tensor([0.25, 0.5], dtype=torch.float64)
    out = act_deriv1('srelu', t)
    assert isinstance(out, torch.Tensor)
    np.testing.assert_allclose(out.numpy(), [0.5, 0.0])


def test_bundle_orders():
    x = torch.linspace(-1, 2, 7, dtype=torch.float64)
    for kind in ACTIVATIONS:
        value, d1, d2 = activation_bundle(kind, x, order=0)
        assert d1 is None and d2 is None
        value2, d1, d2 = activation_bundle(kind, x, order=2)
        assert torch.equal(value, value2)
        assert d1.shape == x.shape and d2.shape == x.shape


def test_unknown_activation():
    with pytest.raises(ValueError):
        act_value('tanh', 0.3)


def test_kink_points():
    np.testing.assert_array_equal(kink_points('relu'), [0.])
    np.testing.assert_array_equal(kink_points('srelu3'), [0., 1.])
