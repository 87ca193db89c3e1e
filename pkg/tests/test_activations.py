import numpy as np
import pytest

from devimplicit.activations import ACTIVATION_KINDS, activation_derivs, activation_derivs3
from devimplicit.errors import ConfigurationError


def fd(fn, x, h=1e-6):
    return (fn(x + h) - fn(x - h)) / (2 * h)


def test_tanh_at_origin():
    v, d1, d2 = activation_derivs("tanh", 0.0)
    assert v == 0.0 and d1 == 1.0 and d2 == 0.0


def test_sine_at_origin():
    v, d1, d2 = activation_derivs("sine", 0.0)
    assert v == 0.0 and d1 == 1.0 and d2 == 0.0


def test_gelu_at_origin_matches_finite_differences():
    v, d1, d2 = activation_derivs("gelu", 0.0)
    assert v == 0.0
    assert d1 == pytest.approx(0.5, abs=1e-15)
    # oracle: central difference of the first derivative of the erf-based gelu
    d1_of = lambda x: activation_derivs("gelu", x)[1]
    assert d2 == pytest.approx(fd(d1_of, 0.0), abs=1e-6)


def test_unknown_kind_raises():
    with pytest.raises(ConfigurationError):
        activation_derivs("relu", 0.0)


@pytest.mark.parametrize("kind", ACTIVATION_KINDS)
def test_derivative_chain_matches_finite_differences(kind):
    # avoid the elu kink at 0 where one-sided second derivatives differ
    xs = np.array([-1.7, -0.9, -0.31, 0.42, 0.8, 1.9])
    value = lambda x: activation_derivs3(kind, x)[0]
    d1_of = lambda x: activation_derivs3(kind, x)[1]
    d2_of = lambda x: activation_derivs3(kind, x)[2]
    v, d1, d2, d3 = activation_derivs3(kind, xs)
    assert np.allclose(d1, fd(value, xs), atol=1e-7)
    assert np.allclose(d2, fd(d1_of, xs), atol=1e-7)
    assert np.allclose(d3, fd(d2_of, xs), atol=1e-6)


def test_sine_omega_scaling():
    v, d1, d2, d3 = activation_derivs3("sine", 0.3, omega=2.5)
    assert v == pytest.approx(np.sin(0.75))
    assert d1 == pytest.approx(2.5 * np.cos(0.75))
    assert d2 == pytest.approx(-(2.5 ** 2) * np.sin(0.75))
    assert d3 == pytest.approx(-(2.5 ** 3) * np.cos(0.75))


def test_silu_extreme_inputs_stay_finite():
    v, d1, d2, d3 = activation_derivs3("silu", np.array([-500.0, 500.0]))
    assert np.all(np.isfinite([v, d1, d2, d3]))
