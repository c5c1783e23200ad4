"""heatlab: desk-scale laboratory for a stochastic heat equation driven by
multiplicative space-time harmonic noise.

Subpackages: levy (spectral resolvent and growth bounds), kernels
(transition densities), martingale (Hermite/exponential-martingale
identities), brownian (paths, suprema, first passage), spde (mild-solution
stepping and Picard iteration), moments (Monte Carlo moment growth),
config/cli (reproducible experiment runs).
"""

__version__ = "0.1.0"

from . import brownian, config, kernels, levy, martingale, moments, spde  # noqa: F401
from .errors import (  # noqa: F401
    BlowUpError,
    ConfigurationError,
    DivergenceError,
    DomainError,
    GridTooSmallError,
    HeatLabError,
    RangeError,
)
