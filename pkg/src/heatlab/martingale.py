"""Exponential martingales, Hermite polynomials, and the Gaussian mixture.

The multiplicative noise coefficient used by the SPDE is a mixture of
exponential martingales exp(lambda*B - lambda^2 t/2) against a Gaussian
measure C exp(-lambda^2/2) dlambda, which collapses to a closed form.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


def hermite(n: int, x):
    """Probabilists' Hermite polynomial h_n via the three-term recursion

        h_{n+1}(x) = x h_n(x) - n h_{n-1}(x),  h_0 = 1, h_1 = x.
    """
    if n < 0:
        raise DomainError(f"degree must be nonnegative, got {n}")
    x = np.asarray(x, dtype=float)
    h_prev = np.ones_like(x)
    if n == 0:
        return float(h_prev) if h_prev.ndim == 0 else h_prev
    h = x.copy()
    for k in range(1, n):
        h, h_prev = x * h - k * h_prev, h
    return float(h) if h.ndim == 0 else h


def space_time_hermite(n: int, b, t: float):
    """H_n(b, t) = t^(n/2) h_n(b/sqrt(t)), continued to b^n at t = 0.

    Computed through the scaled recursion H_{n+1} = b H_n - n t H_{n-1},
    which is exact for t > 0 and removes the 0/0 at t = 0.
    """
    if n < 0:
        raise DomainError(f"degree must be nonnegative, got {n}")
    if t < 0:
        raise DomainError(f"t must be nonnegative, got {t!r}")
    b = np.asarray(b, dtype=float)
    h_prev = np.ones_like(b)
    if n == 0:
        return float(h_prev) if h_prev.ndim == 0 else h_prev
    h = b.copy()
    for k in range(1, n):
        h, h_prev = b * h - k * t * h_prev, h
    return float(h) if h.ndim == 0 else h


def exp_martingale(lam: float, b, t: float):
    """M_t = exp(lam * b - lam^2 t / 2); mean 1 over b ~ N(0, t)."""
    if t < 0:
        raise DomainError(f"t must be nonnegative, got {t!r}")
    b = np.asarray(b, dtype=float)
    out = np.exp(lam * b - 0.5 * lam**2 * t)
    return float(out) if out.ndim == 0 else out


def martingale_series(lam: float, b, t: float, n_terms: int):
    """Partial sum sum_{n<n_terms} lam^n/n! H_n(b, t) of the expansion of M_t."""
    if n_terms < 1:
        raise DomainError(f"n_terms must be >= 1, got {n_terms}")
    if t < 0:
        raise DomainError(f"t must be nonnegative, got {t!r}")
    b = np.asarray(b, dtype=float)
    h_prev = np.ones_like(b)
    total = h_prev.copy()  # n = 0 term
    if n_terms > 1:
        h = b.copy()
        coeff = lam
        total = total + coeff * h
        for k in range(1, n_terms - 1):
            h, h_prev = b * h - k * t * h_prev, h
            coeff *= lam / (k + 1)
            total = total + coeff * h
    return float(total) if total.ndim == 0 else total


def harmonic_mixture_value(c: float, b, t: float):
    """f(b, t) = int exp(lam*b - lam^2 (1+t)/2) * c dlam, in closed form:

        c * sqrt(2 pi / (1+t)) * exp(b^2 / (2 (1+t))).
    """
    if c <= 0:
        raise DomainError(f"mixing constant must be positive, got {c!r}")
    if t < 0:
        raise DomainError(f"t must be nonnegative, got {t!r}")
    b = np.asarray(b, dtype=float)
    out = c * math.sqrt(2.0 * math.pi / (1.0 + t)) * np.exp(b**2 / (2.0 * (1.0 + t)))
    return float(out) if out.ndim == 0 else out


def hitting_limit_value(lam: float, a: float, t_a: float) -> float:
    """Limit of the exponential martingale along a path stopped at level a:

        exp(lam * a - lam^2 t_a / 2).
    """
    if t_a < 0:
        raise DomainError(f"hitting time must be nonnegative, got {t_a!r}")
    return math.exp(lam * a - 0.5 * lam**2 * t_a)


def frozen_mixture_value(c: float, a: float, t_a: float) -> float:
    """Gaussian mixture with the path frozen at (a, t_a):

        c * sqrt(2 pi / (1 + t_a)) * exp(a^2 / (2 (1 + t_a))).
    """
    if c <= 0:
        raise DomainError(f"mixing constant must be positive, got {c!r}")
    if t_a < 0:
        raise DomainError(f"hitting time must be nonnegative, got {t_a!r}")
    return c * math.sqrt(2.0 * math.pi / (1.0 + t_a)) * math.exp(a**2 / (2.0 * (1.0 + t_a)))


@dataclass(frozen=True)
class ExponentialMartingale:
    """M_t = exp(lam B_t - lam^2 t/2) as a value object."""

    lam: float

    def value(self, b, t: float):
        return exp_martingale(self.lam, b, t)


@dataclass(frozen=True)
class HarmonicMixture:
    """Gaussian-mixture space-time harmonic function with constant c."""

    c: float

    def __post_init__(self):
        if self.c <= 0:
            raise DomainError("mixing constant must be positive")

    def value(self, b, t: float):
        return harmonic_mixture_value(self.c, b, t)


class HermiteBasis:
    """Table of Hermite coefficient vectors up to a maximum degree."""

    def __init__(self, max_degree: int):
        if max_degree < 0:
            raise DomainError("max_degree must be nonnegative")
        self.max_degree = max_degree
        coeffs = [np.array([1.0]), np.array([0.0, 1.0])]
        for n in range(1, max_degree):
            nxt = np.zeros(n + 2)
            nxt[1:] += coeffs[n]
            nxt[: n] -= n * coeffs[n - 1]
            coeffs.append(nxt)
        self._coeffs = coeffs[: max_degree + 1]

    def coefficients(self, n: int) -> np.ndarray:
        if not (0 <= n <= self.max_degree):
            raise DomainError(f"degree {n} outside table (max {self.max_degree})")
        return self._coeffs[n]

    def value(self, n: int, x):
        c = self.coefficients(n)
        return np.polyval(c[::-1], np.asarray(x, dtype=float))
