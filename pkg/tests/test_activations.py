import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gcunet import autodiff as ad
from gcunet.activations import (Activation, act_derivative, act_forward, activation,
                                derivative_error, gcu_zeros, prelu_param_grad)
from gcunet.errors import NonFiniteValue, ShapeMismatch

KINDS = list(Activation)


def test_parse_is_case_insensitive():
    assert Activation.parse("GCU") is Activation.GCU
    assert Activation.parse(" PReLU ") is Activation.PRELU
    with pytest.raises(ValueError):
        Activation.parse("swish")


def test_gcu_values():
    z = np.array([0, math.pi / 2, math.pi])
    np.testing.assert_allclose(act_forward("gcu", z), [0, 0, -math.pi], atol=1e-15)
    np.testing.assert_allclose(act_derivative("gcu", np.array([0.0, math.pi / 2])),
                               [1, -math.pi / 2], atol=1e-15)


def test_mish_values():
    # 30-digit mpmath evaluation of z*tanh(ln(1+e^z)) and its derivative
    assert act_forward("mish", np.array(0.0)) == 0
    assert act_forward("mish", np.array(1.0)) == pytest.approx(0.865098388267310346, abs=1e-15)
    assert act_forward("mish", np.array(-2.0)) == pytest.approx(-0.252501482695708864, abs=1e-15)
    assert act_derivative("mish", np.array(0.0)) == pytest.approx(0.6, abs=1e-15)
    assert act_derivative("mish", np.array(1.0)) == pytest.approx(1.049036220099792159, abs=1e-14)


def test_mish_stable_for_large_inputs():
    z = np.array([-1000.0, -40, 40, 1000])
    with np.errstate(over="raise"):
        y = act_forward("mish", z)
        d = act_derivative("mish", z)
    assert np.all(np.isfinite(y)) and np.all(np.isfinite(d))
    np.testing.assert_allclose(y[2:], z[2:])


def test_prelu_and_relu_values():
    assert act_forward("prelu", np.array([-2.0, 3]), 0.25).tolist() == [-0.5, 3]
    assert act_derivative("prelu", np.array([-1.0]), 0.1).tolist() == pytest.approx([0.1])
    assert act_forward("relu", np.array([-1.0, 0, 2])).tolist() == [0, 0, 2]


def test_kink_convention_at_zero():
    assert act_derivative("relu", np.array(0.0)) == 0
    assert act_derivative("prelu", np.array(0.0), 0.3) == pytest.approx(0.3)


def test_prelu_per_channel_slopes():
    z = -np.ones((2, 3, 2, 2))
    out = act_forward("prelu", z, np.array([0.1, 0.2, 0.3]))
    np.testing.assert_allclose(out[0, :, 0, 0], [-0.1, -0.2, -0.3])
    with pytest.raises(ShapeMismatch):
        act_forward("prelu", z, np.array([0.1, 0.2]))


def test_non_finite_input_rejected():
    with pytest.raises(NonFiniteValue):
        act_forward("gcu", np.array([np.nan]))


@pytest.mark.parametrize("kind", KINDS)
def test_derivative_matches_central_differences(kind):
    assert derivative_error(kind, points=1000, seed=5) <= 1e-6


def test_prelu_param_grad_examples():
    assert np.array_equal(prelu_param_grad(np.ones((2, 3)), np.ones((2, 3))), np.zeros(3))
    assert prelu_param_grad(np.array([[-2.0]]), np.array([[1.0]])).tolist() == [-2]


def test_prelu_param_grad_matches_finite_differences():
    rng = np.random.default_rng(9)
    z = rng.normal(size=(3, 2, 4, 4))
    up = rng.normal(size=z.shape)
    alpha = np.array([0.2, 0.4])

    def f(tape, a):
        return ad.total(activation(tape.leaf(z), "prelu", a) * up)

    assert ad.grad_check(f, alpha) <= 1e-8
    eps = 1e-6
    for c in range(2):
        e = np.zeros(2)
        e[c] = eps
        num = (np.sum(act_forward("prelu", z, alpha + e) * up)
               - np.sum(act_forward("prelu", z, alpha - e) * up)) / (2 * eps)
        assert prelu_param_grad(z, up)[c] == pytest.approx(num, rel=1e-6)


def test_gcu_zeros():
    assert gcu_zeros(1) == [math.pi / 2]
    np.testing.assert_allclose(gcu_zeros(3), [math.pi / 2, 3 * math.pi / 2, 5 * math.pi / 2])
    zs = np.array(gcu_zeros(50))
    np.testing.assert_allclose(np.diff(zs), math.pi, rtol=1e-12)
    # cos is only zero up to the rounding of each z, which grows with z
    assert np.all(np.abs(act_forward("gcu", zs)) <= 1e-15 * zs**2)


def test_gcu_sign_alternates_between_zeros():
    zs = [0.0] + gcu_zeros(20)
    mids = np.array([(a + b) / 2 for a, b in zip(zs, zs[1:])])
    signs = np.sign(act_forward("gcu", mids))
    assert np.all(signs[1:] == -signs[:-1])


@given(st.floats(-1e6, 1e6, allow_nan=False))
def test_gcu_amplitude_bound_and_oddness(z):
    z = np.float64(z)
    y = act_forward("gcu", np.array(z))
    assert abs(y) <= abs(z)
    assert act_forward("gcu", np.array(-z)) == -y


def test_gcu_amplitude_touches_bound_only_at_multiples_of_pi():
    k = np.arange(-10, 11)
    np.testing.assert_allclose(np.abs(act_forward("gcu", k * np.pi)), np.abs(k * np.pi), rtol=1e-12)
    z = np.linspace(0.1, 30, 5000)
    z = z[np.abs(z / np.pi - np.round(z / np.pi)) > 1e-3]
    assert np.all(np.abs(act_forward("gcu", z)) < np.abs(z))


@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=20))
def test_prelu_with_zero_slope_is_relu(values):
    z = np.array(values)
    assert np.array_equal(act_forward("prelu", z, 0.0), act_forward("relu", z))


def test_mish_derivative_is_continuous():
    z = np.arange(-5, 5, 1e-4)
    d = act_derivative("mish", z)
    assert np.max(np.abs(np.diff(d))) <= 1e-3
