"""Transition densities for the Brownian / alpha-stable generators.

Space is truncated to a periodic box [-L, L] so the generator is diagonal
in the discrete Fourier basis; the symbol is exp(-t |xi|^alpha), matching
the normalisation L = Laplacian (not Laplacian/2) used everywhere else.
Kernels synthesised this way integrate to 1 on the grid exactly and obey
the on-diagonal identity  int p(t,x,y)^2 dy = p(2t, 0)  to rounding.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import erfc, erfcinv
from scipy.special import gamma as gamma_fn

from .errors import DomainError, GridTooSmallError


@dataclass(frozen=True)
class GridSpec:
    """Periodic grid on [-L, L] with N points, N a power of two."""

    half_width: float
    n_points: int

    def __post_init__(self):
        if self.half_width <= 0:
            raise DomainError("half_width must be positive")
        n = self.n_points
        if n < 8 or (n & (n - 1)) != 0:
            raise DomainError(f"n_points must be a power of two >= 8, got {n}")

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / self.n_points

    @property
    def x(self) -> np.ndarray:
        return -self.half_width + self.dx * np.arange(self.n_points)

    @property
    def xi(self) -> np.ndarray:
        """Angular frequencies pi*k/L in FFT order."""
        return 2.0 * math.pi * np.fft.fftfreq(self.n_points, d=self.dx)

    @property
    def xi_r(self) -> np.ndarray:
        """Nonnegative angular frequencies for real-FFT work."""
        return 2.0 * math.pi * np.fft.rfftfreq(self.n_points, d=self.dx)

    def index_of(self, x: float) -> int:
        j = int(round((x + self.half_width) / self.dx))
        if not (0 <= j < self.n_points) or abs(self.x[j] - x) > 1e-9 * max(1.0, abs(x)):
            raise DomainError(f"x = {x:g} is not a grid point")
        return j


@dataclass(frozen=True)
class HeatKernel:
    """Semigroup kernel bundle: generator order alpha on a grid.

    alpha = 2 is the Laplacian (closed form available); alpha in (1, 2)
    is the fractional generator, evaluated spectrally.
    """

    grid: GridSpec
    alpha: float = 2.0

    def __post_init__(self):
        if not (1.0 < self.alpha <= 2.0):
            raise DomainError(f"alpha must lie in (1, 2], got {self.alpha!r}")

    def values(self, t: float) -> np.ndarray:
        return stable_kernel(self.alpha, t, self.grid)


def gaussian_kernel(t: float, x):
    """Closed-form kernel of the Laplacian: (4 pi t)^(-1/2) exp(-x^2/(4t))."""
    if t <= 0:
        raise DomainError(f"t must be positive, got {t!r}")
    x = np.asarray(x, dtype=float)
    out = np.exp(-(x**2) / (4.0 * t)) / math.sqrt(4.0 * math.pi * t)
    return float(out) if out.ndim == 0 else out


def truncation_mass(alpha: float, t: float, half_width: float) -> float:
    """Estimated kernel mass outside [-L, L].

    Gaussian tail for alpha = 2; the heavy-tail asymptote
    2 Gamma(1+alpha) sin(pi alpha/2) t / (pi alpha L^alpha) otherwise.
    """
    if alpha == 2.0:
        return float(erfc(half_width / (2.0 * math.sqrt(t))))
    return (
        2.0
        * gamma_fn(1.0 + alpha)
        * math.sin(math.pi * alpha / 2.0)
        * t
        / (math.pi * alpha * half_width**alpha)
    )


def min_half_width(alpha: float, t: float, mass_tol: float = 1e-6) -> float:
    """Smallest L whose estimated truncation mass is below mass_tol."""
    if alpha == 2.0:
        return 2.0 * math.sqrt(t) * float(erfcinv(mass_tol))
    c = 2.0 * gamma_fn(1.0 + alpha) * math.sin(math.pi * alpha / 2.0) / (math.pi * alpha)
    return (c * t / mass_tol) ** (1.0 / alpha)


def _synthesize(alpha: float, t: float, grid: GridSpec) -> np.ndarray:
    """Inverse DFT of the symbol; centered so index j sits at x = -L + j dx."""
    symbol = np.exp(-t * np.abs(grid.xi) ** alpha)
    vals = np.fft.ifft(symbol).real / grid.dx
    return np.fft.fftshift(vals)


def stable_kernel(
    alpha: float,
    t: float,
    grid: GridSpec,
    mass_tol: float = 1e-6,
    neg_floor: float = 1e-10,
) -> np.ndarray:
    """Grid samples of the order-alpha kernel at time t.

    Checks that the estimated mass lost to the periodic truncation stays
    below mass_tol, clamps spectral-ringing negatives within neg_floor to
    zero, and raises if the ringing is any worse than that.
    """
    if not (1.0 < alpha <= 2.0):
        raise DomainError(f"alpha must lie in (1, 2], got {alpha!r}")
    if t <= 0:
        raise DomainError(f"t must be positive, got {t!r}")
    mass = truncation_mass(alpha, t, grid.half_width)
    if mass > mass_tol:
        raise GridTooSmallError(
            f"estimated truncation mass {mass:.3g} exceeds {mass_tol:g}; "
            f"need half_width >= {min_half_width(alpha, t, mass_tol):.3g}"
        )
    vals = _synthesize(alpha, t, grid)
    floor = neg_floor * max(1.0, float(vals.max(initial=0.0)))
    worst = float(vals.min())
    if worst < -floor:
        raise GridTooSmallError(
            f"spectral ringing reaches {worst:.3g}; refine the grid"
        )
    np.clip(vals, 0.0, None, out=vals)
    return vals


def semigroup_apply(kernel: HeatKernel, u0: np.ndarray, t: float) -> np.ndarray:
    """Apply the periodic semigroup to a grid function via its multiplier.

    t = 0 is the identity; constants and the grid mean are preserved
    exactly because the zero mode's multiplier is 1.
    """
    if t < 0:
        raise DomainError(f"t must be nonnegative, got {t!r}")
    u0 = np.asarray(u0, dtype=float)
    if u0.shape[-1] != kernel.grid.n_points:
        raise DomainError("u0 does not match the grid")
    if t == 0.0:
        return u0.copy()
    mult = np.exp(-t * kernel.grid.xi_r**kernel.alpha)
    return np.fft.irfft(np.fft.rfft(u0, axis=-1) * mult, n=kernel.grid.n_points, axis=-1)


def on_diagonal_l2(kernel: HeatKernel, t: float) -> float:
    """int p(t,x,y)^2 dy by grid quadrature; equals p(2t, 0) on the grid."""
    if t <= 0:
        raise DomainError(f"t must be positive, got {t!r}")
    vals = _synthesize(kernel.alpha, t, kernel.grid)
    return float(np.sum(vals**2) * kernel.grid.dx)


@dataclass(frozen=True)
class RatioReport:
    """r(t,x) = p(t,x) / (t^(-1/alpha) min t/|x|^(1+alpha)) over a product set."""

    alpha: float
    t_values: np.ndarray
    x_values: np.ndarray
    ratios: np.ndarray  # shape (len(t), len(x))
    min_ratio: float
    max_ratio: float
    comparability_constant: float  # c with all ratios in [1/c, c]


def kernel_bound_check(
    alpha: float,
    t_set,
    x_set,
    dx: float = 0.05,
    mass_tol: float = 1e-6,
) -> RatioReport:
    """Measure the two-sided envelope ratio over t_set x x_set.

    x_set values must be multiples of dx; each t gets its own grid wide
    enough that the truncation-mass estimate passes at mass_tol.
    """
    t_values = np.atleast_1d(np.asarray(t_set, dtype=float))
    x_values = np.atleast_1d(np.asarray(x_set, dtype=float))
    ratios = np.empty((t_values.size, x_values.size))
    for i, t in enumerate(t_values):
        need = max(min_half_width(alpha, t, mass_tol), 2.0 * np.abs(x_values).max() + 1.0)
        n = 1 << max(3, math.ceil(math.log2(2.0 * need / dx)))
        grid = GridSpec(half_width=n * dx / 2.0, n_points=n)
        vals = stable_kernel(alpha, t, grid, mass_tol=mass_tol)
        for j, x in enumerate(x_values):
            near = t ** (-1.0 / alpha)
            bound = near if x == 0.0 else min(near, t / abs(x) ** (1.0 + alpha))
            ratios[i, j] = vals[grid.index_of(x)] / bound
    lo, hi = float(ratios.min()), float(ratios.max())
    c = max(hi, 1.0 / lo) if lo > 0 else math.inf
    return RatioReport(alpha, t_values, x_values, ratios, lo, hi, c)


# ---------------------------------------------------------------------------
# Kernel-energy route to the resolvent integral.
#
# I(s) = int p(s,x,y)^2 dy is evaluated on a per-s grid sized by
# self-similarity (kernel scale s^(1/alpha)), so the Laplace transform
# int_0^inf e^(-beta s) I(s) ds can be quadratured down to s = 0 after the
# substitution s = tau^(alpha/(alpha-1)) removes the integrable singularity.
# ---------------------------------------------------------------------------

_ENERGY_SYMBOL_LOG = 25.0  # symbol at the Nyquist edge is e^(-2*this)


def _energy_box_factor(alpha: float, rtol: float) -> float:
    # Solve the periodisation (wrap) bound for L = K * s^(1/alpha); the
    # bound is scale-free, so K depends only on (alpha, rtol).
    if alpha == 2.0:
        return math.sqrt(2.0 * math.log(1.0 / rtol))
    c = (
        2.0 ** (2.0 + 1.0 / alpha)
        * gamma_fn(1.0 + alpha)
        * math.sin(math.pi * alpha / 2.0)
        / gamma_fn(1.0 + 1.0 / alpha)
    )
    return 0.5 * (c / rtol) ** (1.0 / (1.0 + alpha))


def energy_grid(alpha: float, s: float, rtol: float = 1e-8) -> GridSpec:
    """Grid adapted to evaluating the squared-kernel mass at time s."""
    scale = s ** (1.0 / alpha)
    half_width = _energy_box_factor(alpha, rtol) * scale
    dx = math.pi * (2.0 * s / _ENERGY_SYMBOL_LOG) ** (1.0 / alpha)
    n = 1 << max(8, math.ceil(math.log2(2.0 * half_width / dx)))
    return GridSpec(half_width=n * dx / 2.0, n_points=n)


def on_diagonal_series(alpha: float, s_values, rtol: float = 1e-8) -> np.ndarray:
    """I(s) = int p(s,.)^2 on per-s adapted grids, by direct quadrature."""
    out = np.empty(len(s_values))
    for i, s in enumerate(s_values):
        grid = energy_grid(alpha, s, rtol)
        vals = _synthesize(alpha, s, grid)
        out[i] = np.sum(vals**2) * grid.dx
    return out


@lru_cache(maxsize=16)
def _energy_nodes(alpha: float, t_max: float, n_nodes: int, rtol: float):
    q = alpha / (alpha - 1.0)
    tau = np.linspace(0.0, t_max ** (1.0 / q), n_nodes)
    s = tau[1:] ** q
    vals = on_diagonal_series(alpha, s, rtol)
    # g(tau) = q * I(tau^q) * tau^(q-1); by self-similarity it extends
    # continuously (with zero slope) to tau = 0.
    g = np.empty(n_nodes)
    g[1:] = q * vals * tau[1:] ** (q - 1.0)
    g[0] = g[1]
    return tau, s, g


def _simpson(y: np.ndarray, h: float) -> float:
    return (h / 3.0) * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum())


def upsilon_laplace(
    alpha: float,
    beta: float,
    t_max: float = 50.0,
    n_nodes: int = 2001,
    rtol: float = 1e-8,
) -> float:
    """int_0^t_max e^(-beta s) I(s) ds -- the kernel-side route to upsilon.

    Independent of the spectral quadrature in levy.upsilon: this one never
    touches the exponent, only synthesised kernels.  Requires beta * t_max
    large enough that the discarded tail is negligible.
    """
    if beta <= 0:
        raise DomainError("beta must be positive")
    if beta * t_max < 30.0:
        raise DomainError("t_max too short for this beta (tail not negligible)")
    if n_nodes % 2 == 0:
        raise DomainError("n_nodes must be odd (composite Simpson)")
    tau, s, g = _energy_nodes(alpha, t_max, n_nodes, rtol)
    weighted = g.copy()
    weighted[1:] *= np.exp(-beta * s)
    return _simpson(weighted, tau[1] - tau[0])


def energy_profile(alpha: float, t_max: float = 50.0, n_nodes: int = 2001, rtol: float = 1e-8):
    """(times, cumulative int_0^t I(s) ds) on the substituted lattice."""
    tau, s, g = _energy_nodes(alpha, t_max, n_nodes, rtol)
    h = tau[1] - tau[0]
    cum = np.concatenate([[0.0], np.cumsum(0.5 * h * (g[1:] + g[:-1]))])
    times = np.concatenate([[0.0], s])
    return times, cum
