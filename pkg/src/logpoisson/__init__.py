"""Log-domain posterior moments and denoisers for Poisson observations."""
__version__ = "0.1.0"

from .exceptions import ConfigError, DomainError, LogPoissonError, NumericalError
from .oracle import DensityGrid, MomentSet, posterior_central_moments, posterior_density
from .priors import PriorSpec, SignalConfig, corrupt_poisson, generate_signal, sample_prior
from .recursion import (FdConfig, FdNoiseWarning, Mu1Estimator, baseline_x_recursion,
                        recursion_multivariate, recursion_scalar)
from .reconstruction import eta_to_x, gram_charlier, gram_charlier_eta
from .special import digamma, polygamma

__all__ = [
    "ConfigError", "DensityGrid", "DomainError", "FdConfig", "FdNoiseWarning", "LogPoissonError",
    "MomentSet", "Mu1Estimator", "NumericalError", "PriorSpec", "SignalConfig",
    "baseline_x_recursion", "corrupt_poisson", "digamma", "eta_to_x", "generate_signal",
    "gram_charlier", "gram_charlier_eta", "polygamma", "posterior_central_moments",
    "posterior_density", "recursion_multivariate", "recursion_scalar", "sample_prior",
]
