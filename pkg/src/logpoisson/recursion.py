"""Higher posterior central moments from the first moment and its derivatives.

For the Poisson model in the natural parameter ``eta = log x``::

    mu2 = d mu1 / dy
    mu3 = d mu2 / dy
    mu_{k+1} = d mu_k / dy + k * mu2 * mu_{k-1}      (k >= 3, scalar y)

In one dimension each of the ``k`` correction terms of the tensor recursion
is the same product ``mu2 * mu_{k-1}``, hence the factor ``k``. Expanding
the recursion symbolically gives every ``mu_k`` as a polynomial in the
derivatives ``d_m = mu1^(m)``; those polynomials are built once and then
evaluated on derivative values from an exact callback or from central
finite differences.
"""
import functools
import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError
from .oracle import MAX_MOMENT_ORDER, MomentSet, posterior_mean
from .special import polygamma


class FdNoiseWarning(RuntimeWarning):
    """Finite-difference moments changed by more than 10% when the step doubled."""


@dataclass(frozen=True)
class FdConfig:
    """Central-difference settings.

    ``accuracy`` is the order of the truncation error in ``step``; the
    stencil width grows with the derivative order to keep it.
    """

    step: float = 1e-3
    accuracy: int = 4
    max_order: int = 5

    def __post_init__(self):
        if not self.step > 0:
            raise DomainError("finite-difference step must be positive")
        if self.accuracy < 2 or self.accuracy % 2:
            raise DomainError("accuracy must be an even integer >= 2")
        if not 1 <= self.max_order <= 5:
            raise DomainError("max_order must lie in [1, 5]")


def fornberg_weights(offsets, order):
    """Finite-difference weights for derivative ``order`` at 0 on ``offsets``.

    Returns an array ``c`` with ``c[i, k]`` the weight of node ``i`` for the
    ``k``-th derivative, ``k <= order``.
    """
    x = np.asarray(offsets, dtype=np.float64)
    n = len(x)
    c = np.zeros((n, order + 1))
    c[0, 0] = 1.0
    c1 = 1.0
    c4 = x[0]
    for i in range(1, n):
        mn = min(i, order)
        c2 = 1.0
        c5 = c4
        c4 = x[i]
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c


def stencil_halfwidth(order, accuracy):
    return (order + 1) // 2 - 1 + accuracy // 2


@functools.lru_cache(maxsize=None)
def central_stencil(order, accuracy):
    """Integer offsets and weights of the central stencil (unit spacing)."""
    p = stencil_halfwidth(order, accuracy)
    offsets = np.arange(-p, p + 1)
    w = fornberg_weights(offsets, order)[:, order]
    w[np.abs(w) < 1e-13] = 0.0
    return offsets, w


# -- symbolic recursion -------------------------------------------------------
# A polynomial is a dict mapping exponent tuples (e_1, ..., e_M) over the
# derivatives d_1..d_M to integer coefficients.

def _poly_add(p, q, scale=1):
    out = dict(p)
    for mono, c in q.items():
        out[mono] = out.get(mono, 0) + scale * c
        if out[mono] == 0:
            del out[mono]
    return out


def _poly_mul(p, q):
    out = {}
    for m1, c1 in p.items():
        for m2, c2 in q.items():
            mono = tuple(a + b for a, b in zip(m1, m2))
            out[mono] = out.get(mono, 0) + c1 * c2
    return {m: c for m, c in out.items() if c}


def _poly_diff(p, nvars):
    """d/dy of a polynomial in d_1..d_M using d(d_j)/dy = d_{j+1}."""
    out = {}
    for mono, c in p.items():
        for j, e in enumerate(mono):
            if e == 0:
                continue
            if j + 1 >= nvars:
                raise DomainError("derivative order exceeds the polynomial ring")
            m = list(mono)
            m[j] -= 1
            m[j + 1] += 1
            m = tuple(m)
            out[m] = out.get(m, 0) + c * e
    return {m: c for m, c in out.items() if c}


@functools.lru_cache(maxsize=None)
def moment_polynomials(K):
    """Polynomials for ``mu_2..mu_K`` in the derivatives ``d_1..d_{K-1}`` of mu1.

    Returned as a tuple of ``((exponents, coeff), ...)`` tuples, one per order.
    """
    if not 2 <= K <= MAX_MOMENT_ORDER:
        raise DomainError(f"K must lie in [2, {MAX_MOMENT_ORDER}]")
    nvars = K - 1
    unit = [0] * nvars
    unit[0] = 1
    mu = {2: {tuple(unit): 1}}
    if K >= 3:
        mu[3] = _poly_diff(mu[2], nvars)
    for k in range(3, K):
        mu[k + 1] = _poly_add(_poly_diff(mu[k], nvars), _poly_mul(mu[2], mu[k - 1]), scale=k)
    return tuple(tuple(sorted(mu[k].items())) for k in range(2, K + 1))


def describe_polynomials(K):
    """Human-readable form, e.g. ``mu4 = d3 + 3*d1^2``."""
    lines = []
    for k, poly in enumerate(moment_polynomials(K), start=2):
        terms = []
        for mono, c in poly:
            factors = [f"d{j + 1}" + (f"^{e}" if e > 1 else "") for j, e in enumerate(mono) if e]
            terms.append((f"{c}*" if c != 1 else "") + "*".join(factors))
        lines.append(f"mu{k} = " + " + ".join(terms))
    return lines


def evaluate_moments(derivs, K):
    """Evaluate ``mu_2..mu_K`` from ``derivs = [mu1', mu1'', ..., mu1^(K-1)]``.

    Entries of ``derivs`` may be arrays (elementwise evaluation).
    """
    out = []
    for poly in moment_polynomials(K):
        total = 0.0
        for mono, c in poly:
            term = float(c)
            for j, e in enumerate(mono):
                if e:
                    term = term * derivs[j] ** e
            total = total + term
        out.append(total)
    return out


# -- first-moment estimators ---------------------------------------------------

class Mu1Estimator:
    """A first posterior moment ``mu1(y)`` with optional exact derivatives.

    Parameters
    ----------
    evaluator : callable
        ``y -> mu1(y)``. For vector observations it maps a vector to a
        vector of the same length.
    derivatives : callable, optional
        ``(y, m) -> [mu1, mu1', ..., mu1^(m)]`` for scalar ``y``. When given,
        the estimator runs in exact-callback mode.
    batch : callable, optional
        Vectorised evaluator taking a stack of observations (leading axis)
        and returning the stacked outputs. Falls back to a Python loop.
    fd_step : float
        Default finite-difference step.
    """

    def __init__(self, evaluator, derivatives=None, batch=None, fd_step=1e-3,
                 jacobian=None, domain="eta"):
        if not fd_step > 0:
            raise DomainError("fd_step must be positive")
        self.evaluator = evaluator
        self.derivatives = derivatives
        self.jacobian = jacobian
        self._batch = batch
        self.fd_step = float(fd_step)
        self.domain = domain

    @property
    def derivative_mode(self):
        return "exact-callback" if self.derivatives is not None else "finite-difference"

    def __call__(self, y):
        return self.evaluator(y)

    def many(self, ys):
        if self._batch is not None:
            return np.asarray(self._batch(ys), dtype=np.float64)
        return np.asarray([self.evaluator(v) for v in ys], dtype=np.float64)

    @classmethod
    def gamma_conjugate(cls, shape, rate, domain="eta"):
        """Closed-form mu1 under a Gamma(shape, rate) prior, with exact derivatives."""
        if domain == "eta":
            def f(y):
                return polygamma(0, shape + y) - np.log(rate + 1.0)

            def derivs(y, m):
                return [f(y)] + [polygamma(j, shape + y) for j in range(1, m + 1)]
        else:
            def f(y):
                return (shape + y) / (rate + 1.0)

            def derivs(y, m):
                return [f(y)] + [1.0 / (rate + 1.0) if j == 1 else 0.0 for j in range(1, m + 1)]
        return cls(f, derivatives=derivs, domain=domain)

    @classmethod
    def from_oracle(cls, prior, domain="eta", fd_step=1e-3, **quad):
        """mu1 computed by quadrature against ``prior``."""
        return cls(lambda y: posterior_mean(prior, y, domain, **quad), fd_step=fd_step,
                   domain=domain)


def _fd_derivatives(mu1, y, K, fd):
    """Derivatives 1..K-1 of scalar mu1 at ``y`` with steps h and 2h."""
    orders = range(1, K)
    p = max(stencil_halfwidth(m, fd.accuracy) for m in orders)
    offs = np.arange(-2 * p, 2 * p + 1)
    vals = mu1.many(y + offs * fd.step)
    centre = 2 * p
    # weights of a derivative stencil sum to zero; removing the centre value
    # keeps their rounding residue from being amplified by 1 / h^m
    diffs = vals - vals[centre]
    fine, coarse = [], []
    for m in orders:
        o, w = central_stencil(m, fd.accuracy)
        fine.append(w @ diffs[centre + o] / fd.step ** m)
        coarse.append(w @ diffs[centre + 2 * o] / (2 * fd.step) ** m)
    return float(vals[centre]), fine, coarse


def _warn_noise(fine, coarse, label):
    for k, (a, b) in enumerate(zip(fine, coarse), start=2):
        if abs(a - b) > 0.1 * abs(a) and abs(a - b) > 1e-10:
            warnings.warn(f"{label}: mu{k} changed by more than 10% when the finite-difference "
                          f"step doubled ({a:.4g} vs {b:.4g}); derivative noise dominates",
                          FdNoiseWarning, stacklevel=3)


def _scalar_recursion(mu1, y, K, fd, domain):
    if not 2 <= K <= MAX_MOMENT_ORDER:
        raise DomainError(f"K must lie in [2, {MAX_MOMENT_ORDER}], got {K}")
    if K - 1 > fd.max_order:
        raise DomainError(f"K={K} needs derivatives beyond max_order={fd.max_order}")
    y = float(y)
    if mu1.derivatives is not None:
        d = [float(v) for v in mu1.derivatives(y, K - 1)]
        return MomentSet(y, domain, d[0], [float(v) for v in evaluate_moments(d[1:], K)])
    m1, fine, coarse = _fd_derivatives(mu1, y, K, fd)
    moments = [float(v) for v in evaluate_moments(fine, K)]
    _warn_noise(moments, evaluate_moments(coarse, K), f"recursion at y={y}")
    return MomentSet(y, domain, m1, moments)


def tweedie_eta(marginal_score, y):
    """Posterior mean of ``log x`` from the marginal score: ``psi(y+1) + score``."""
    if y < 0:
        raise DomainError("y must be non-negative")
    return polygamma(0, np.asarray(y, dtype=np.float64) + 1.0) + marginal_score


def recursion_scalar(mu1, y, K=4, fd=None):
    """Posterior central moments ``mu_2..mu_K`` of ``log x`` at scalar ``y``."""
    fd = fd or FdConfig(step=mu1.fd_step)
    return _scalar_recursion(mu1, y, K, fd, "eta")


def baseline_x_recursion(mu1x, y, K=4, fd=None):
    """The same recursion applied verbatim to ``E[x | y]``.

    This is the Gaussian-style construction carried over to the x-domain;
    under Poisson noise it does not yield the true posterior moments of x
    and serves as the comparison baseline.
    """
    fd = fd or FdConfig(step=mu1x.fd_step)
    return _scalar_recursion(mu1x, y, K, fd, "x")


def recursion_multivariate(mu1, y, fd=None, third=False, symmetrize=False):
    """Posterior covariance of ``log x`` as the Jacobian of a vector mu1.

    Parameters
    ----------
    mu1 : Mu1Estimator
        Maps an observation vector to the vector of posterior means.
    y : array_like
        Observation vector of length ``n <= 1024``.
    third : bool
        Also return the diagonal slice ``[mu3]_{iii}`` from second
        differences along each coordinate.
    symmetrize : bool
        Replace the Jacobian by ``(J + J.T) / 2``.
    """
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    if y.ndim != 1 or n > 1024:
        raise DomainError("y must be a vector of length <= 1024")
    fd = fd or FdConfig(step=mu1.fd_step)
    m1 = np.asarray(mu1(y), dtype=np.float64)
    if mu1.jacobian is not None and not third:
        jac = np.asarray(mu1.jacobian(y), dtype=np.float64)
        diag3 = None
    else:
        order = 2 if third else 1
        p = max(stencil_halfwidth(m, fd.accuracy) for m in range(1, order + 1))
        offs = np.arange(-p, p + 1)
        # outputs[j, s] is mu1(y + offs[s] * h * e_j)
        stack = np.repeat(y[None, None, :], len(offs), axis=1).repeat(n, axis=0)
        idx = np.arange(n)
        stack[idx, :, idx] += offs[None, :] * fd.step
        outputs = mu1.many(stack.reshape(n * len(offs), n)).reshape(n, len(offs), n)
        o1, w1 = central_stencil(1, fd.accuracy)
        # jac[i, j] = d mu1_i / d y_j
        jac = np.einsum("s,jsi->ij", w1, outputs[:, o1 + p, :]) / fd.step
        diag3 = None
        if third:
            o2, w2 = central_stencil(2, fd.accuracy)
            diag3 = outputs[idx[:, None], o2[None, :] + p, idx[:, None]] @ w2 / fd.step ** 2
    if symmetrize:
        jac = 0.5 * (jac + jac.T)
    central = [jac] if diag3 is None else [jac, diag3]
    return MomentSet(y, "eta", m1, central)
