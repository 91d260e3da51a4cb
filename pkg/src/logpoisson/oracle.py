"""Ground-truth posterior quantities by dense grid quadrature.

The Poisson likelihood is extended to real ``y >= 0`` through
``p(y|x) = x^y exp(-x) / Gamma(y + 1)`` so that derivatives in ``y`` exist.
All sums run in log space.

By default the quadrature nodes are uniform in ``eta = log x`` over the
prior support: the integrands decay smoothly at both ends in ``eta``, where
the trapezoidal rule converges much faster than on a uniform ``x`` grid.
Pass ``spacing="x"`` for nodes uniform in ``x``.
"""
import csv
import functools
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import special as _sp

from ._io import atomic_write
from .exceptions import DomainError, NumericalError
from .priors import log_prior_density, trapezoid_weights
from .special import polygamma

DEFAULT_GRID_SIZE = 4000
MAX_MOMENT_ORDER = 6


@dataclass
class DensityGrid:
    grid: np.ndarray
    values: np.ndarray
    domain: str = "x"

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.domain not in ("x", "eta"):
            raise DomainError(f"domain must be 'x' or 'eta', got {self.domain!r}")
        if self.grid.shape != self.values.shape or self.grid.ndim != 1:
            raise DomainError("grid and values must be 1-D arrays of equal length")
        if np.any(np.diff(self.grid) <= 0):
            raise DomainError("grid must be strictly increasing")

    def integral(self):
        return float(np.trapezoid(self.values, self.grid))

    def normalized(self):
        z = self.integral()
        if not z > 0:
            raise NumericalError("cannot normalise a density with zero mass")
        return DensityGrid(self.grid, self.values / z, self.domain)

    def to_csv(self, path):
        def write(fh):
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["support", "density"])
            for g, v in zip(self.grid, self.values):
                w.writerow([repr(float(g)), repr(float(v))])
        atomic_write(path, write)

    @classmethod
    def from_csv(cls, path, domain="x"):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1], domain)


@dataclass
class MomentSet:
    """Posterior mean ``mu1`` and central moments ``central = [mu2, ..., muK]``.

    In the multivariate case ``mu1`` is a vector, ``central[0]`` the
    covariance matrix, and higher entries hold diagonal slices.
    """

    y: object
    domain: str
    mu1: object
    central: list = field(default_factory=list)

    @property
    def order(self):
        return len(self.central) + 1

    def moment(self, k):
        """Central moment of order ``k`` (``k = 1`` gives 0)."""
        if k == 1:
            return 0.0 if np.ndim(self.mu1) == 0 else np.zeros_like(self.mu1)
        return self.central[k - 2]

    def to_dict(self):
        def plain(v):
            return np.asarray(v).tolist() if np.ndim(v) else float(v)
        return {"y": plain(self.y), "domain": self.domain, "K": self.order,
                "mu1": plain(self.mu1), "central": [plain(c) for c in self.central]}

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, d):
        return cls(d["y"], d["domain"], d["mu1"], list(d["central"]))


def log_likelihood(y, x):
    """``log p(y|x)`` with the Gamma-function extension to real ``y``."""
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    return y * np.log(x) - x - _sp.gammaln(y + 1.0)


def quadrature_grid(prior, size=DEFAULT_GRID_SIZE, spacing="log"):
    lo, hi = prior.support
    if size < 100:
        raise DomainError("grid size must be >= 100")
    if spacing == "log":
        return np.exp(np.linspace(np.log(lo), np.log(hi), size))
    if spacing == "x":
        return np.linspace(lo, hi, size)
    raise DomainError(f"spacing must be 'log' or 'x', got {spacing!r}")


@functools.lru_cache(maxsize=32)
def _nodes(prior, size, spacing):
    """Quadrature nodes and ``log(weight * prior density)`` at each node."""
    x = quadrature_grid(prior, size, spacing)
    if spacing == "log":
        w = trapezoid_weights(np.log(x)) * x
    else:
        w = trapezoid_weights(x)
    logw = np.log(w) + log_prior_density(prior, x)
    x.setflags(write=False)
    logw.setflags(write=False)
    return x, logw


def _check_y(y):
    if not np.isfinite(y) or y < 0:
        raise DomainError(f"observation must be finite and >= 0, got {y}")


def marginal_log(prior, y, grid_size=DEFAULT_GRID_SIZE, spacing="log"):
    """``log p(y)`` for the prior-weighted Poisson likelihood."""
    _check_y(y)
    if prior.kind == "point-mass":
        return float(log_likelihood(y, prior.atom))
    x, logw = _nodes(prior, grid_size, spacing)
    return float(_sp.logsumexp(logw + log_likelihood(y, x)))


def _posterior_weights(prior, y, grid_size, spacing):
    x, logw = _nodes(prior, grid_size, spacing)
    a = logw + log_likelihood(y, x)
    m = np.max(a)
    if not np.isfinite(m):
        raise NumericalError(f"posterior underflowed on the grid at y={y}; widen the support")
    p = np.exp(a - m)
    return x, p / p.sum()


def posterior_density(prior, y, grid_size=DEFAULT_GRID_SIZE, spacing="log", grid=None):
    """Posterior ``p(x|y)`` as an x-domain :class:`DensityGrid`.

    With ``grid`` given, the density is evaluated at those points (within
    the support). Either way the values are normalised by the trapezoidal
    rule on the returned grid, so ``integral()`` is 1 to rounding.
    """
    _check_y(y)
    if grid is None:
        grid = quadrature_grid(prior, grid_size, spacing)
    grid = np.asarray(grid, dtype=np.float64)
    if prior.kind == "point-mass":
        w = trapezoid_weights(grid)
        vals = np.zeros_like(grid)
        i = int(np.argmin(np.abs(grid - prior.atom)))
        vals[i] = 1.0 / w[i]
        return DensityGrid(grid, vals, "x")
    logz = marginal_log(prior, y, grid_size, spacing)
    if not np.isfinite(logz):
        raise NumericalError(f"marginal underflowed at y={y}; widen the support or grid")
    logp = log_prior_density(prior, grid) + log_likelihood(y, grid) - logz
    vals = np.exp(logp)
    z = float(trapezoid_weights(grid) @ vals)
    if not z > 0:
        raise NumericalError(f"posterior is identically zero on the grid at y={y}")
    return DensityGrid(grid, vals / z, "x")


def posterior_central_moments(prior, y, K=4, domain="eta", grid_size=DEFAULT_GRID_SIZE,
                              spacing="log"):
    """Posterior mean and central moments of ``log x`` or ``x`` given ``y``."""
    if not 1 <= K <= MAX_MOMENT_ORDER:
        raise DomainError(f"K must lie in [1, {MAX_MOMENT_ORDER}], got {K}")
    if domain not in ("eta", "x"):
        raise DomainError(f"domain must be 'eta' or 'x', got {domain!r}")
    _check_y(y)
    if prior.kind == "point-mass":
        g = np.log(prior.atom) if domain == "eta" else prior.atom
        return MomentSet(float(y), domain, float(g), [0.0] * (K - 1))
    x, p = _posterior_weights(prior, y, grid_size, spacing)
    g = np.log(x) if domain == "eta" else x
    mu1 = float(p @ g)
    d = g - mu1
    central = []
    dk = d.copy()
    for _ in range(2, K + 1):
        dk = dk * d
        central.append(float(p @ dk))
    return MomentSet(float(y), domain, mu1, central)


def posterior_mean(prior, y, domain="eta", grid_size=DEFAULT_GRID_SIZE, spacing="log"):
    """``E[log x | y]`` (``domain="eta"``) or ``E[x | y]``."""
    return posterior_central_moments(prior, y, 1, domain, grid_size, spacing).mu1


def marginal_score(prior, y, step=1e-3, grid_size=DEFAULT_GRID_SIZE, spacing="log"):
    """Central-difference estimate of ``d/dy log p(y)``."""
    if step <= 0:
        raise DomainError("step must be positive")
    if y < step:
        raise DomainError(f"marginal_score needs y >= step, got y={y}, step={step}")
    up = marginal_log(prior, y + step, grid_size, spacing)
    down = marginal_log(prior, y - step, grid_size, spacing)
    return (up - down) / (2.0 * step)


def gamma_conjugate_moments(shape, rate, y, K=4):
    """Closed-form eta-domain posterior moments under a Gamma(shape, rate) prior.

    The posterior is Gamma(shape + y, rate + 1); ``log x`` then has cumulants
    ``kappa_k = psi^(k-1)(shape + y)`` with location ``-log(rate + 1)``.
    """
    a = shape + y
    k = [None, polygamma(0, a) - np.log(rate + 1.0)] + [polygamma(j - 1, a) for j in range(2, K + 1)]
    central = []
    for order in range(2, K + 1):
        central.append(_central_from_cumulants(k, order))
    return MomentSet(float(y), "eta", float(k[1]), central)


def _central_from_cumulants(k, order):
    if order == 2:
        return k[2]
    if order == 3:
        return k[3]
    if order == 4:
        return k[4] + 3 * k[2] ** 2
    if order == 5:
        return k[5] + 10 * k[3] * k[2]
    if order == 6:
        return k[6] + 15 * k[4] * k[2] + 10 * k[3] ** 2 + 15 * k[2] ** 3
    raise DomainError("order must lie in [2, 6]")
