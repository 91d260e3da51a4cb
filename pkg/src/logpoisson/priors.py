"""Scalar priors over x > 0, synthetic 1-D signals, and Poisson corruption.

Gain convention: ``z ~ Poisson(gain * x)`` and ``y = z / gain``, so that
``E[y] = x`` and ``Var[y] = x / gain``. Larger gain means less noise.
"""
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import special as _sp
from scipy.ndimage import gaussian_filter1d

from .exceptions import DomainError

KINDS = ("log-normal-mixture", "gamma", "point-mass", "tabulated")

DEFAULT_SUPPORT = (0.01, 20.0)
GAMMA_SUPPORT = (1e-10, 60.0)
MAX_RATE = 1e9


@dataclass(frozen=True)
class PriorSpec:
    """A prior over x restricted to ``support = (lo, hi)`` with ``lo > 0``.

    Parametric kinds are renormalised to the truncated support. Use the
    classmethod constructors rather than filling fields by hand.
    """

    kind: str
    weights: tuple = ()
    locs: tuple = ()
    scales: tuple = ()
    shape: float = 0.0
    rate: float = 0.0
    atom: float = 0.0
    grid: tuple = ()
    values: tuple = ()
    support: tuple = DEFAULT_SUPPORT

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown prior kind {self.kind!r}; expected one of {KINDS}")
        lo, hi = (float(s) for s in self.support)
        if not (0 < lo < hi and np.isfinite(hi)):
            raise DomainError(f"support must satisfy 0 < lo < hi, got {self.support}")
        object.__setattr__(self, "support", (lo, hi))
        if self.kind == "log-normal-mixture":
            w = np.asarray(self.weights, float)
            if not (len(w) == len(self.locs) == len(self.scales) and len(w) > 0):
                raise DomainError("mixture weights, locs and scales must have equal non-zero length")
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise DomainError("mixture weights must be non-negative and sum to 1")
            if np.any(np.asarray(self.scales, float) <= 0):
                raise DomainError("mixture scales must be positive")
        elif self.kind == "gamma":
            if self.shape <= 0 or self.rate <= 0:
                raise DomainError("gamma shape and rate must be positive")
        elif self.kind == "point-mass":
            if not lo <= self.atom <= hi:
                raise DomainError(f"atom {self.atom} lies outside support {self.support}")
        else:
            g = np.asarray(self.grid, float)
            v = np.asarray(self.values, float)
            if g.ndim != 1 or g.shape != v.shape or len(g) < 2:
                raise DomainError("tabulated grid and values must be 1-D of equal length >= 2")
            if np.any(np.diff(g) <= 0) or g[0] <= 0:
                raise DomainError("tabulated grid must be positive and strictly increasing")
            if np.any(v < 0):
                raise DomainError("tabulated values must be non-negative")
            if abs(np.trapezoid(v, g) - 1.0) > 1e-8:
                raise DomainError("tabulated values must integrate to 1 on their grid")
            if not (np.isclose(g[0], lo) and np.isclose(g[-1], hi)):
                raise DomainError("tabulated support must equal the grid end points")

    @classmethod
    def lognormal_mixture(cls, weights, locs, scales, support=DEFAULT_SUPPORT):
        return cls("log-normal-mixture", weights=tuple(float(w) for w in weights),
                   locs=tuple(float(m) for m in locs),
                   scales=tuple(float(s) for s in scales), support=tuple(support))

    @classmethod
    def bimodal(cls, support=DEFAULT_SUPPORT):
        """Equal-weight log-normal pair with modes near x = 1 and x = 7.4."""
        return cls.lognormal_mixture((0.5, 0.5), (0.0, 2.0), (0.35, 0.30), support)

    @classmethod
    def gamma(cls, shape, rate, support=GAMMA_SUPPORT):
        return cls("gamma", shape=float(shape), rate=float(rate), support=tuple(support))

    @classmethod
    def point_mass(cls, atom, support=DEFAULT_SUPPORT):
        return cls("point-mass", atom=float(atom), support=tuple(support))

    @classmethod
    def tabulated(cls, grid, values):
        grid = tuple(float(g) for g in grid)
        return cls("tabulated", grid=grid, values=tuple(float(v) for v in values),
                   support=(grid[0], grid[-1]))

    def to_dict(self):
        d = {"kind": self.kind, "support": list(self.support)}
        if self.kind == "log-normal-mixture":
            d.update(weights=list(self.weights), locs=list(self.locs), scales=list(self.scales))
        elif self.kind == "gamma":
            d.update(shape=self.shape, rate=self.rate)
        elif self.kind == "point-mass":
            d.update(atom=self.atom)
        else:
            d.update(grid=list(self.grid), values=list(self.values))
        return d

    @classmethod
    def from_dict(cls, d):
        """Build from a config mapping; omitted parameters take defaults."""
        kind = d.get("kind", "log-normal-mixture")
        if kind == "log-normal-mixture":
            base = cls.bimodal()
            return cls.lognormal_mixture(d.get("weights", base.weights), d.get("locs", base.locs),
                                         d.get("scales", base.scales),
                                         d.get("support", DEFAULT_SUPPORT))
        if kind == "gamma":
            return cls.gamma(d.get("shape", 2.0), d.get("rate", 1.0), d.get("support", GAMMA_SUPPORT))
        if kind == "point-mass":
            return cls.point_mass(d.get("atom", 2.0), d.get("support", DEFAULT_SUPPORT))
        if kind == "tabulated":
            return cls.tabulated(d["grid"], d["values"])
        raise DomainError(f"unknown prior kind {kind!r}")


def _mixture_mass(prior):
    lo, hi = np.log(prior.support)
    mu = np.asarray(prior.locs)
    sd = np.asarray(prior.scales)
    return _sp.ndtr((hi - mu) / sd) - _sp.ndtr((lo - mu) / sd)


def _gamma_mass(prior):
    lo, hi = prior.support
    return _sp.gammainc(prior.shape, prior.rate * hi) - _sp.gammainc(prior.shape, prior.rate * lo)


def _check_support(prior, x):
    lo, hi = prior.support
    if np.any(x < lo * (1 - 1e-12)) or np.any(x > hi * (1 + 1e-12)):
        raise DomainError(f"x outside prior support {prior.support}")


def log_prior_density(prior, x):
    """Log density of ``prior`` at ``x`` (vectorised); point masses give -inf/+inf."""
    x = np.asarray(x, dtype=np.float64)
    _check_support(prior, x)
    if prior.kind == "log-normal-mixture":
        mu = np.asarray(prior.locs)[:, None]
        sd = np.asarray(prior.scales)[:, None]
        w = np.asarray(prior.weights)[:, None]
        lx = np.log(x).reshape(1, -1)
        comp = (np.log(w, where=w > 0, out=np.full_like(w, -np.inf))
                - 0.5 * ((lx - mu) / sd) ** 2 - np.log(sd) - 0.5 * np.log(2 * np.pi) - lx)
        z = np.sum(prior.weights * _mixture_mass(prior))
        out = _sp.logsumexp(comp, axis=0) - np.log(z)
        return out.reshape(x.shape)
    if prior.kind == "gamma":
        a, b = prior.shape, prior.rate
        return (a * np.log(b) - _sp.gammaln(a) + (a - 1) * np.log(x) - b * x
                - np.log(_gamma_mass(prior)))
    if prior.kind == "point-mass":
        return np.where(x == prior.atom, np.inf, -np.inf)
    v = np.interp(x, prior.grid, prior.values)
    with np.errstate(divide="ignore"):
        return np.log(v)


def prior_density(prior, x):
    """Density of ``prior`` at ``x``, renormalised to the truncated support.

    A point mass has no density; it evaluates to ``inf`` at the atom and 0
    elsewhere. Use :func:`prior_on_grid` for its grid representation.
    """
    out = np.exp(log_prior_density(prior, x))
    if np.ndim(out) == 0:
        return float(out)
    return out


def trapezoid_weights(grid):
    """Weights ``w`` such that ``w @ f`` is the trapezoidal integral of ``f``."""
    grid = np.asarray(grid, dtype=np.float64)
    h = np.diff(grid)
    w = np.zeros_like(grid)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


def prior_on_grid(prior, grid):
    """Prior density sampled on ``grid``.

    Point masses put all their mass in the trapezoidal cell of the grid
    node nearest the atom.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if prior.kind != "point-mass":
        return prior_density(prior, grid)
    w = trapezoid_weights(grid)
    out = np.zeros_like(grid)
    i = int(np.argmin(np.abs(grid - prior.atom)))
    out[i] = 1.0 / w[i]
    return out


def sample_prior(prior, count, seed):
    """Draw ``count`` i.i.d. values from the truncated prior."""
    if count < 1:
        raise DomainError("count must be >= 1")
    rng = np.random.default_rng(seed)
    return _sample(prior, count, rng)


def _sample(prior, count, rng):
    lo, hi = prior.support
    if prior.kind == "point-mass":
        return np.full(count, prior.atom)
    if prior.kind == "log-normal-mixture":
        mass = np.asarray(prior.weights) * _mixture_mass(prior)
        comp = rng.choice(len(mass), size=count, p=mass / mass.sum())
        mu = np.asarray(prior.locs)[comp]
        sd = np.asarray(prior.scales)[comp]
        a = _sp.ndtr((np.log(lo) - mu) / sd)
        b = _sp.ndtr((np.log(hi) - mu) / sd)
        u = a + (b - a) * rng.random(count)
        return np.clip(np.exp(mu + sd * _sp.ndtri(u)), lo, hi)
    if prior.kind == "gamma":
        a = _sp.gammainc(prior.shape, prior.rate * lo)
        b = _sp.gammainc(prior.shape, prior.rate * hi)
        u = a + (b - a) * rng.random(count)
        return np.clip(_sp.gammaincinv(prior.shape, u) / prior.rate, lo, hi)
    g = np.asarray(prior.grid)
    v = np.asarray(prior.values)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(g))])
    cdf /= cdf[-1]
    return np.interp(rng.random(count), cdf, g)


@dataclass(frozen=True)
class SignalConfig:
    """Synthetic smooth-signal generator settings."""

    length: int = 256
    shape: float = 1.5
    rate: float = 2.0
    smoothing_std: float = 4.0
    floor: float = 1e-3

    def __post_init__(self):
        if self.length < 1:
            raise DomainError("signal length must be >= 1")
        if self.shape <= 0 or self.rate <= 0:
            raise DomainError("gamma shape and rate must be positive")
        if self.smoothing_std < 0:
            raise DomainError("smoothing_std must be non-negative")
        if not 0 < self.floor < 0.1:
            raise DomainError("floor must lie in (0, 0.1)")

    def to_dict(self):
        return asdict(self)


@dataclass
class Observation:
    y: np.ndarray
    gain: float
    counts: np.ndarray = field(repr=False)


def generate_signals(cfg, count, rng):
    """``count`` clean signals of shape ``(count, cfg.length)`` from ``rng``."""
    g = rng.gamma(cfg.shape, 1.0 / cfg.rate, size=(count, cfg.length))
    if cfg.smoothing_std > 0:
        g = gaussian_filter1d(g, cfg.smoothing_std, axis=1, mode="reflect", truncate=4.0)
    lo = g.min(axis=1, keepdims=True)
    span = g.max(axis=1, keepdims=True) - lo
    safe = np.where(span > 0, span, 1.0)
    x = np.where(span > 0, (g - lo) / safe, 1.0)
    return np.clip(x, cfg.floor, 1.0)


def generate_signal(cfg, seed):
    """One clean signal in ``[floor, 1]`` with maximum exactly 1."""
    return generate_signals(cfg, 1, np.random.default_rng(seed))[0]


def poisson_counts(x, gain, rng):
    rate = gain * np.asarray(x, dtype=np.float64)
    if np.any(rate < 0) or not np.all(np.isfinite(rate)):
        raise DomainError("Poisson rates must be finite and non-negative")
    if np.any(rate > MAX_RATE):
        raise DomainError(f"gain * x exceeds {MAX_RATE:g}; counts would overflow")
    return rng.poisson(rate)


def corrupt_poisson(x, gain, seed):
    """Corrupt ``x`` with gain-scaled Poisson noise.

    Returns an :class:`Observation` with raw counts ``z ~ Poisson(gain * x)``
    and rescaled observation ``y = z / gain``.
    """
    if gain <= 0:
        raise DomainError("gain must be positive")
    z = poisson_counts(x, gain, np.random.default_rng(seed))
    return Observation(y=z / gain, gain=float(gain), counts=z)
