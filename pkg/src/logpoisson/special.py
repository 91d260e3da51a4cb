"""Polygamma, log-gamma and probabilists' Hermite polynomials.

The polygamma kernel shifts its argument upward with the recurrence
``psi^(n)(x) = psi^(n)(x + 1) - (-1)^n n! / x^(n+1)`` until ``x >= 16`` and
then sums the Bernoulli asymptotic series. Both a numba kernel and a
vectorised numpy version exist; :mod:`logpoisson._accel` picks one.
"""
import math

import numpy as np
from scipy import special as _sp

from ._accel import USE_NUMBA, njit
from .exceptions import DomainError

MAX_POLYGAMMA_ORDER = 6
MAX_HERMITE_DEGREE = 8

_SHIFT_TO = 16.0
# B_2, B_4, ..., B_20
_BERNOULLI = np.array([
    1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0,
    -691.0 / 2730.0, 7.0 / 6.0, -3617.0 / 510.0, 43867.0 / 798.0,
    -174611.0 / 330.0,
])
_FACT = np.array([float(math.factorial(i)) for i in range(40)])


@njit
def _asymptotic(n, x, bern, fact):
    if n == 0:
        x2 = x * x
        s = 0.0
        p = x2
        for k in range(1, bern.shape[0] + 1):
            s += bern[k - 1] / (2.0 * k * p)
            p *= x2
        return math.log(x) - 0.5 / x - s
    s = fact[n - 1] / x ** n + fact[n] / (2.0 * x ** (n + 1))
    for k in range(1, bern.shape[0] + 1):
        s += bern[k - 1] * fact[2 * k + n - 1] / (fact[2 * k] * x ** (2 * k + n))
    if n % 2 == 0:
        return -s
    return s


@njit
def _polygamma_kernel(n, xs, out, bern, fact):
    sign = 1.0 if n % 2 == 0 else -1.0
    c = sign * fact[n]
    for i in range(xs.shape[0]):
        x = xs[i]
        acc = 0.0
        while x < 16.0:
            acc += c / x ** (n + 1)
            x += 1.0
        out[i] = _asymptotic(n, x, bern, fact) - acc


def _polygamma_numpy(n, xs):
    xs = xs.copy()
    acc = np.zeros_like(xs)
    c = (-1.0) ** n * _FACT[n]
    mask = xs < _SHIFT_TO
    while mask.any():
        acc[mask] += c / xs[mask] ** (n + 1)
        xs[mask] += 1.0
        mask = xs < _SHIFT_TO
    if n == 0:
        x2 = xs * xs
        s = np.zeros_like(xs)
        p = x2.copy()
        for k in range(1, len(_BERNOULLI) + 1):
            s += _BERNOULLI[k - 1] / (2.0 * k * p)
            p *= x2
        return np.log(xs) - 0.5 / xs - s - acc
    s = _FACT[n - 1] / xs ** n + _FACT[n] / (2.0 * xs ** (n + 1))
    for k in range(1, len(_BERNOULLI) + 1):
        s += _BERNOULLI[k - 1] * _FACT[2 * k + n - 1] / (_FACT[2 * k] * xs ** (2 * k + n))
    if n % 2 == 0:
        s = -s
    return s - acc


def _polygamma_numba(n, xs):
    out = np.empty_like(xs)
    _polygamma_kernel(n, xs, out, _BERNOULLI, _FACT)
    return out


_polygamma_impl = _polygamma_numba if USE_NUMBA else _polygamma_numpy


def polygamma(n, x):
    """Polygamma function of order ``n`` (``n = 0`` is the digamma).

    Parameters
    ----------
    n : int
        Order, ``0 <= n <= 6``.
    x : float or array_like
        Strictly positive argument(s).

    Returns
    -------
    float or ndarray
        ``psi^(n)(x)``, with the shape of ``x``.
    """
    if int(n) != n or not 0 <= n <= MAX_POLYGAMMA_ORDER:
        raise DomainError(f"polygamma order must be an integer in [0, 6], got {n}")
    n = int(n)
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(arr > 0) or not np.all(np.isfinite(arr)):
        raise DomainError("polygamma requires finite x > 0")
    out = _polygamma_impl(n, np.ascontiguousarray(arr.ravel())).reshape(arr.shape)
    if out.ndim == 0:
        return float(out)
    return out


def digamma(x):
    return polygamma(0, x)


def log_gamma(x):
    """``ln Gamma(x)`` for ``x > 0``."""
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(arr > 0):
        raise DomainError("log_gamma requires x > 0")
    out = _sp.gammaln(arr)
    if out.ndim == 0:
        return float(out)
    return out


def hermite_prob(n, z):
    """Probabilists' Hermite polynomial ``He_n(z)`` by three-term recurrence."""
    if int(n) != n or not 0 <= n <= MAX_HERMITE_DEGREE:
        raise DomainError(f"Hermite degree must be an integer in [0, 8], got {n}")
    z = np.asarray(z, dtype=np.float64)
    prev = np.ones_like(z)
    if n == 0:
        cur = prev
    else:
        cur = z.copy()
        for k in range(1, int(n)):
            prev, cur = cur, z * cur - k * prev
    if cur.ndim == 0:
        return float(cur)
    return cur
