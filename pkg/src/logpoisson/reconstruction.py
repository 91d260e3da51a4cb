"""Gram-Charlier posterior reconstruction and the cumulative squared error.

The type-A expansion around the Gaussian with the posterior mean and
variance is::

    p(eta) = phi(z) / sigma * (1 + sum_{n=3}^{K} E[He_n(Z)] / n! * He_n(z))

with ``z = (eta - mu1) / sigma`` and ``Z`` the standardised posterior
variable. For ``K = 4`` the coefficients reduce to ``kappa3 / (6 sigma^3)``
and ``kappa4 / (24 sigma^4)``.
"""
import csv
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import hermite_e

from ._io import atomic_write
from .exceptions import DomainError
from .oracle import DensityGrid
from .priors import trapezoid_weights
from .special import hermite_prob

NEGATIVITY_POLICIES = ("clamp-renormalize", "leave")


@dataclass(frozen=True)
class ReconstructionConfig:
    order: int = 4
    eta_halfwidth: float = 6.0  # in posterior standard deviations
    eta_points: int = 2001
    x_lo: float = 0.01
    x_hi: float = 20.0
    x_points: int = 2000
    negativity: str = "clamp-renormalize"

    def __post_init__(self):
        if not 2 <= self.order <= 6:
            raise DomainError("expansion order must lie in [2, 6]")
        if self.eta_points < 100 or self.x_points < 100:
            raise DomainError("grid sizes must be >= 100")
        if self.negativity not in NEGATIVITY_POLICIES:
            raise DomainError(f"negativity policy must be one of {NEGATIVITY_POLICIES}")
        if not 0 < self.x_lo < self.x_hi:
            raise DomainError("x grid needs 0 < x_lo < x_hi")

    def x_grid(self):
        return np.linspace(self.x_lo, self.x_hi, self.x_points)

    def eta_grid(self, moments):
        sigma = math.sqrt(moments.moment(2))
        return np.linspace(moments.mu1 - self.eta_halfwidth * sigma,
                           moments.mu1 + self.eta_halfwidth * sigma, self.eta_points)


def hermite_coefficients(moments, order=None):
    """``E[He_n(Z)] / n!`` for ``n = 0..order`` from standardised central moments."""
    order = moments.order if order is None else order
    if order > moments.order:
        raise DomainError(f"order {order} exceeds the {moments.order} available moments")
    mu2 = moments.moment(2)
    if not mu2 > 0:
        raise DomainError("posterior variance must be positive for a Gram-Charlier expansion")
    sigma = math.sqrt(mu2)
    std = [1.0, 0.0] + [moments.moment(k) / sigma ** k for k in range(2, order + 1)]
    coeffs = np.zeros(order + 1)
    for n in range(order + 1):
        poly = hermite_e.herme2poly(np.eye(n + 1)[n])  # He_n in the monomial basis
        coeffs[n] = sum(c * std[j] for j, c in enumerate(poly)) / math.factorial(n)
    return coeffs


def apply_negativity(values, grid, policy):
    if policy == "leave":
        return values
    clamped = np.clip(values, 0.0, None)
    z = np.trapezoid(clamped, grid)
    if not z > 0:
        raise DomainError("reconstruction has no positive mass after clamping")
    return clamped / z


def gram_charlier(moments, grid, order=None, negativity="clamp-renormalize"):
    """Gram-Charlier density of ``moments`` on ``grid``, in the moments' own domain."""
    grid = np.asarray(grid, dtype=np.float64)
    coeffs = hermite_coefficients(moments, order)
    sigma = math.sqrt(moments.moment(2))
    z = (grid - moments.mu1) / sigma
    series = np.ones_like(z)
    for n in range(3, len(coeffs)):
        if coeffs[n] != 0.0:
            series += coeffs[n] * hermite_prob(n, z)
    values = np.exp(-0.5 * z * z) / (math.sqrt(2.0 * math.pi) * sigma) * series
    return DensityGrid(grid, apply_negativity(values, grid, negativity), moments.domain)


def gram_charlier_eta(moments, grid_eta, order=None, negativity="clamp-renormalize"):
    """Gram-Charlier reconstruction of the posterior of ``eta = log x``."""
    if moments.domain != "eta":
        raise DomainError("gram_charlier_eta needs eta-domain moments")
    return gram_charlier(moments, grid_eta, order, negativity)


def eta_to_x(density_eta, grid_x, renormalize=True):
    """Change of variables ``p_x(x) = p_eta(log x) / x``, linear in eta."""
    if density_eta.domain != "eta":
        raise DomainError("eta_to_x needs an eta-domain density")
    grid_x = np.asarray(grid_x, dtype=np.float64)
    if np.any(grid_x <= 0):
        raise DomainError("x grid must be strictly positive")
    p_eta = np.interp(np.log(grid_x), density_eta.grid, density_eta.values, left=0.0, right=0.0)
    values = p_eta / grid_x
    if renormalize:
        z = np.trapezoid(values, grid_x)
        if z > 0:
            values = values / z
    return DensityGrid(grid_x, values, "x")


def x_to_eta(density_x, grid_eta):
    """Inverse change of variables ``p_eta(eta) = p_x(e^eta) e^eta``."""
    if density_x.domain != "x":
        raise DomainError("x_to_eta needs an x-domain density")
    grid_eta = np.asarray(grid_eta, dtype=np.float64)
    x = np.exp(grid_eta)
    values = np.interp(x, density_x.grid, density_x.values, left=0.0, right=0.0) * x
    return DensityGrid(grid_eta, values, "eta")


def cumulative_sq_error(approx, truth):
    """Running integral of the squared density error from the low end of the grid.

    Returns ``(curve, total)`` with ``curve[i] = sum_{j <= i} (a_j - t_j)^2 dx_j``,
    where ``dx_j`` are the trapezoidal cell widths.
    """
    if approx.grid.shape != truth.grid.shape or not np.array_equal(approx.grid, truth.grid):
        raise DomainError("approximation and truth must share one grid")
    w = trapezoid_weights(approx.grid)
    curve = np.cumsum((approx.values - truth.values) ** 2 * w)
    return curve, float(curve[-1])


def count_interior_maxima(density, rel_height=1e-3):
    """Number of strict interior local maxima above ``rel_height * max``."""
    v = density.values
    floor = rel_height * np.max(v)
    inner = v[1:-1]
    peaks = (inner > v[:-2]) & (inner >= v[2:]) & (inner > floor)
    return int(np.count_nonzero(peaks))


def write_curves_csv(path, rows):
    """Write ``(route, support, approx, truth, cumulative_error)`` rows.

    ``rows`` is an iterable of ``(route, approx, truth)`` triples of
    x-domain :class:`DensityGrid` on a shared grid.
    """
    def write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["route", "support", "approx", "truth", "cumulative_error"])
        for route, approx, truth in rows:
            curve, _ = cumulative_sq_error(approx, truth)
            for s, a, t, c in zip(approx.grid, approx.values, truth.values, curve):
                w.writerow([route, repr(float(s)), repr(float(a)), repr(float(t)), repr(float(c))])
    atomic_write(path, write)
