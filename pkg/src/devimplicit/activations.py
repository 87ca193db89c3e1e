"""Twice-differentiable activations with closed-form derivatives up to third order.

The third derivative is consumed by the reverse pass when a loss depends on the
field Hessian; the public ``activation_derivs`` stops at second order.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

from .errors import ConfigurationError

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _gelu(x, omega):
    # Exact error-function form. The tanh approximation drifts in the second
    # derivative near |x| ~ 1 and fails finite-difference checks.
    phi = np.exp(-0.5 * x * x) * _INV_SQRT2PI
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    v = x * cdf
    d1 = cdf + x * phi
    d2 = (2.0 - x * x) * phi
    d3 = x * (x * x - 4.0) * phi
    return v, d1, d2, d3


def _silu(x, omega):
    s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    s1 = s * (1.0 - s)
    s2 = s1 * (1.0 - 2.0 * s)
    s3 = s2 * (1.0 - 2.0 * s) - 2.0 * s1 * s1
    v = x * s
    d1 = s + x * s1
    d2 = 2.0 * s1 + x * s2
    d3 = 3.0 * s2 + x * s3
    return v, d1, d2, d3


def _tanh(x, omega):
    t = np.tanh(x)
    u = 1.0 - t * t
    return t, u, -2.0 * t * u, u * (6.0 * t * t - 2.0)


def _elu(x, omega):
    # alpha = 1; C^1 at the origin, second derivative taken from the left branch.
    pos = x > 0
    e = np.exp(np.where(pos, 0.0, x))
    v = np.where(pos, x, e - 1.0)
    d1 = np.where(pos, 1.0, e)
    d2 = np.where(pos, 0.0, e)
    return v, d1, d2, np.array(d2, copy=True)


def _sine(x, omega):
    w = omega
    s = np.sin(w * x)
    c = np.cos(w * x)
    return s, w * c, -(w * w) * s, -(w ** 3) * c


_TABLE = {
    "gelu": _gelu,
    "silu": _silu,
    "tanh": _tanh,
    "elu": _elu,
    "sine": _sine,
}

ACTIVATION_KINDS = tuple(sorted(_TABLE))


def activation_derivs3(kind: str, x, omega: float = 1.0):
    """Return (value, first, second, third derivative) of activation ``kind`` at ``x``.

    ``x`` may be a scalar or any ndarray; ``omega`` only affects ``sine``,
    which is evaluated as sin(omega * x).
    """
    try:
        fn = _TABLE[kind]
    except KeyError:
        raise ConfigurationError(
            f"unknown activation {kind!r}; expected one of {ACTIVATION_KINDS}"
        ) from None
    return fn(np.asarray(x, dtype=np.float64), omega)


def activation_derivs(kind: str, x, omega: float = 1.0):
    """Return (value, first derivative, second derivative) at ``x``."""
    v, d1, d2, _ = activation_derivs3(kind, x, omega)
    return v, d1, d2
