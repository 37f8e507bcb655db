"""Feed-forward activation functions and their analytic derivatives."""

import numpy as np
from scipy.special import erf, expit

from .errors import UndefinedDerivative

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def relu(x):
    return np.maximum(x, 0.0)


def relu_prime(x, strict=False):
    x = np.asarray(x, dtype=np.float64)
    if strict and np.any(x == 0.0):
        raise UndefinedDerivative("relu derivative undefined at 0")
    # relu'(0) := 0
    return (x > 0.0).astype(np.float64)


def gelu(x):
    x = np.asarray(x, dtype=np.float64)
    return x * 0.5 * (1.0 + erf(x / _SQRT2))


def gelu_prime(x, strict=False):
    x = np.asarray(x, dtype=np.float64)
    cdf = 0.5 * (1.0 + erf(x / _SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return cdf + x * pdf


def swish(x):
    x = np.asarray(x, dtype=np.float64)
    return x * expit(x)


def swish_prime(x, strict=False):
    x = np.asarray(x, dtype=np.float64)
    sig = expit(x)
    return sig + x * sig * (1.0 - sig)


ACTIVATIONS = {
    "relu": (relu, relu_prime),
    "gelu": (gelu, gelu_prime),
    "swish": (swish, swish_prime),
}


def get_activation(name):
    """Return ``(phi, phi_prime)`` for an activation name."""
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}") from None
