"""Brownian path simulation and first-passage / maximal-inequality checks.

Heavy path ensembles run through the compiled kernels in _native (one
splitmix64 stream per path); the object-level API below works on explicit
PathSample values and is what the compiled kernels are tested against.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from . import _native
from .errors import ConfigurationError, DomainError
from .seeds import STREAM_BRIDGE, derive_seed_array, generator

_BLOCK = 20000  # paths per generator stream in the vectorised engine
_CHUNK = 512  # time steps per draw

# Mean deficit of a discretely sampled Brownian maximum is about
# 0.5826 sqrt(dt) (the -zeta(1/2)/sqrt(2 pi) constant).
_SUP_DEFICIT = 0.5826


@dataclass(frozen=True)
class PathSample:
    """Discretised Brownian path; values[k] = B(k dt), values[0] = 0."""

    dt: float
    n_steps: int
    seed: int
    values: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    @property
    def horizon(self) -> float:
        return self.dt * self.n_steps


@dataclass(frozen=True)
class HittingRecord:
    level: float
    hit_time: float | None  # None = not hit within the horizon
    bridge_corrected: bool

    @property
    def hit(self) -> bool:
        return self.hit_time is not None


def sample_path(horizon: float, dt: float, seed: int) -> PathSample:
    """Path on [0, horizon]; bit-reproducible from (seed, dt, n_steps)."""
    if horizon <= 0 or dt <= 0:
        raise DomainError("horizon and dt must be positive")
    if dt > horizon:
        raise DomainError(f"dt = {dt:g} exceeds horizon = {horizon:g}")
    n_steps = int(round(horizon / dt))
    incr = generator(seed).standard_normal(n_steps) * math.sqrt(dt)
    values = np.concatenate([[0.0], np.cumsum(incr)])
    return PathSample(dt=dt, n_steps=n_steps, seed=seed, values=values)


def running_sup(path: PathSample) -> np.ndarray:
    """Prefix maximum S(t_k) = max_{j<=k} B(t_j); starts at 0."""
    return np.maximum.accumulate(path.values)


def first_hitting(path: PathSample, a: float, bridge_correct: bool = True) -> HittingRecord:
    """First time the path reaches level a.

    Raw mode reports the first grid point at/above the level.  Bridge mode
    interpolates grid crossings and additionally lets each same-side
    segment fire with probability exp(-2 d0 d1 / dt) (midpoint-timed),
    which removes most of the O(sqrt(dt)) discretisation bias.
    """
    if a == 0.0:
        return HittingRecord(level=a, hit_time=0.0, bridge_corrected=bridge_correct)
    w = np.sign(a) * path.values
    aa = abs(a)
    dt = path.dt
    crossed = w[1:] >= aa
    if not bridge_correct:
        idx = np.flatnonzero(crossed)
        if idx.size == 0:
            return HittingRecord(a, None, False)
        k = int(idx[0])
        return HittingRecord(a, (k + 1) * dt, False)
    u = generator(path.seed, STREAM_BRIDGE).random(path.n_steps)  # one per segment
    below = ~crossed & (w[:-1] < aa)
    p_cross = np.zeros(path.n_steps)
    d0 = aa - w[:-1]
    d1 = aa - w[1:]
    p_cross[below] = np.exp(-2.0 * d0[below] * d1[below] / dt)
    fired = below & (u < p_cross)
    events = crossed | fired
    idx = np.flatnonzero(events)
    if idx.size == 0:
        return HittingRecord(a, None, True)
    k = int(idx[0])
    if crossed[k]:
        t_hit = k * dt + dt * (aa - w[k]) / (w[k + 1] - w[k])
    else:
        t_hit = k * dt + 0.5 * dt
    return HittingRecord(a, t_hit, True)


def path_to_csv(path: PathSample, fh) -> None:
    """Write (t, B_t, S_t) rows."""
    sup = running_sup(path)
    fh.write("t,B,S\n")
    for t, b, s in zip(path.times, path.values, sup):
        fh.write(f"{t:.17g},{b:.17g},{s:.17g}\n")


# ---------------------------------------------------------------------------
# Vectorised ensembles
# ---------------------------------------------------------------------------


def _path_ensemble_stats(master_seed: int, n_paths: int, dt: float, record_steps):
    """Running (B, max B, min B) snapshots at the requested step indices.

    Paths are drawn in fixed blocks of _BLOCK from per-block PCG64 streams,
    so the result depends only on (master_seed, n_paths, dt, record_steps).
    """
    record_steps = sorted(set(int(k) for k in record_steps))
    if record_steps[0] <= 0:
        raise DomainError("record steps must be positive")
    n_steps = record_steps[-1]
    edges = sorted(set(range(0, n_steps, _CHUNK)) | set(record_steps)) + [n_steps]
    edges = sorted(set(e for e in edges if 0 <= e <= n_steps))
    sqdt = math.sqrt(dt)
    rec = {k: i for i, k in enumerate(record_steps)}
    b_out = np.empty((len(record_steps), n_paths))
    hi_out = np.empty_like(b_out)
    lo_out = np.empty_like(b_out)
    for start in range(0, n_paths, _BLOCK):
        stop = min(start + _BLOCK, n_paths)
        m = stop - start
        rng = generator(master_seed, start // _BLOCK)
        b = np.zeros(m)
        hi = np.zeros(m)
        lo = np.zeros(m)
        for e0, e1 in zip(edges[:-1], edges[1:]):
            cum = np.cumsum(rng.standard_normal((e1 - e0, m)), axis=0)
            cum *= sqdt
            cum += b
            np.maximum(hi, cum.max(axis=0), out=hi)
            np.minimum(lo, cum.min(axis=0), out=lo)
            b = cum[-1]
            if e1 in rec:
                i = rec[e1]
                b_out[i, start:stop] = b
                hi_out[i, start:stop] = hi
                lo_out[i, start:stop] = lo
    return record_steps, b_out, hi_out, lo_out


@dataclass(frozen=True)
class SupTailReport:
    """P[S_t >= a t]: simulated frequency vs the bound and the exact value."""

    a: float
    t: float
    empirical: float
    bound: float  # exp(-a^2 t / 2)
    exact: float  # 2 Phi(-a sqrt(t)), reflection principle
    stderr: float
    discretization_allowance: float

    @property
    def within_bound(self) -> bool:
        return self.empirical <= self.bound + 3.0 * self.stderr

    @property
    def matches_exact(self) -> bool:
        tol = 3.0 * self.stderr + self.discretization_allowance
        return abs(self.empirical - self.exact) <= tol


def sup_tail_check(
    a: float, t: float, n_paths: int, seed: int, dt: float = 1e-3
) -> SupTailReport:
    if a <= 0 or t <= 0:
        raise DomainError("a and t must be positive")
    n_steps = int(round(t / dt))
    _, _, hi, _ = _path_ensemble_stats(seed, n_paths, dt, [n_steps])
    empirical = float(np.mean(hi[0] >= a * t))
    bound = math.exp(-(a**2) * t / 2.0)
    exact = 2.0 * float(norm.cdf(-a * math.sqrt(t)))
    stderr = math.sqrt(max(empirical * (1.0 - empirical), 1e-12) / n_paths)
    allowance = (
        _SUP_DEFICIT * math.sqrt(dt) * 2.0 * float(norm.pdf(a * math.sqrt(t))) / math.sqrt(t)
    )
    return SupTailReport(a, t, empirical, bound, exact, stderr, allowance)


@dataclass(frozen=True)
class DoobReport:
    """E[(sup |B|)^p] against (p/(p-1))^p E[|B_t|^p]."""

    p: float
    t: float
    lhs: float
    rhs: float
    lhs_se: float
    rhs_se: float
    constant: float  # (p/(p-1))^p

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + 3.0 * math.hypot(self.lhs_se, self.rhs_se)


def doob_check(p: float, n_paths: int, t: float, seed: int, dt: float = 1e-3) -> DoobReport:
    """Maximal inequality for the submartingale |B|."""
    if p <= 1:
        raise DomainError(f"p must exceed 1, got {p!r}")
    n_steps = int(round(t / dt))
    _, b, hi, lo = _path_ensemble_stats(seed, n_paths, dt, [n_steps])
    sup_abs = np.maximum(hi[0], -lo[0])
    const = (p / (p - 1.0)) ** p
    lhs_samples = sup_abs**p
    rhs_samples = const * np.abs(b[0]) ** p
    lhs = float(lhs_samples.mean())
    rhs = float(rhs_samples.mean())
    return DoobReport(
        p,
        t,
        lhs,
        rhs,
        float(lhs_samples.std(ddof=1) / math.sqrt(n_paths)),
        float(rhs_samples.std(ddof=1) / math.sqrt(n_paths)),
        const,
    )


@dataclass(frozen=True)
class HittingLaplaceReport:
    """Mean of exp(-lambda T_a) vs the closed form exp(-|a| sqrt(2 lambda))."""

    a: float
    lam: float
    empirical: float  # non-hitters bracketed from above by exp(-lam * horizon)
    exact: float
    stderr: float
    bracket_width: float
    n_hit: int
    n_paths: int
    horizon: float
    dt: float
    bridge: bool

    def matches(self, rel_allowance: float = 0.01) -> bool:
        tol = 3.0 * self.stderr + rel_allowance * self.exact + self.bracket_width
        return abs(self.empirical - self.exact) <= tol


def default_hitting_horizon(lam: float, dt: float, cutoff: float = 1e-4) -> float:
    """Shortest horizon (a multiple of dt) with exp(-lam * horizon) < cutoff."""
    if lam <= 0:
        raise DomainError("lambda must be positive")
    return dt * math.ceil(-math.log(cutoff) / (lam * dt))


def hitting_times_ensemble(
    a: float, n_paths: int, dt: float, horizon: float, seed: int, bridge: bool = True
) -> np.ndarray:
    """First-passage times to level a for n_paths compiled paths (inf = no hit)."""
    if dt <= 0 or horizon < dt:
        raise DomainError("need 0 < dt <= horizon")
    seeds = derive_seed_array(seed, np.arange(n_paths, dtype=np.uint64))
    n_steps = int(round(horizon / dt))
    if bridge:
        return _native.hit_times(seeds, n_steps, dt, a, True)
    return _native.hit_times_grid(seeds, n_steps, dt, a)


def hitting_laplace_check(
    a: float,
    lam: float,
    n_paths: int,
    dt: float,
    seed: int,
    horizon: float | None = None,
    bridge: bool = True,
) -> HittingLaplaceReport:
    """Monte Carlo Laplace transform of T_a.

    Non-hitting paths contribute exp(-lam * horizon), an upper bracket
    whose width is reported; the horizon must make that bracket small.
    """
    if lam <= 0:
        raise DomainError("lambda must be positive")
    if horizon is None:
        horizon = default_hitting_horizon(lam, dt)
    elif math.exp(-lam * horizon) >= 1e-4:
        raise ConfigurationError(
            f"horizon {horizon:g} too short for lambda {lam:g}: "
            f"exp(-lam*horizon) = {math.exp(-lam * horizon):.2e} >= 1e-4"
        )
    times = hitting_times_ensemble(a, n_paths, dt, horizon, seed, bridge)
    hit = np.isfinite(times)
    vals = np.exp(-lam * np.minimum(times, horizon))
    empirical = float(vals.mean())
    exact = math.exp(-abs(a) * math.sqrt(2.0 * lam))
    stderr = float(vals.std(ddof=1) / math.sqrt(n_paths))
    bracket = float((~hit).mean() * math.exp(-lam * horizon))
    return HittingLaplaceReport(
        a, lam, empirical, exact, stderr, bracket, int(hit.sum()), n_paths, horizon, dt, bridge
    )


def hitting_times_two_levels(
    level1: float,
    level2: float,
    n_paths: int,
    dt: float,
    horizon: float,
    seed: int,
    bridge: bool = True,
):
    """(T_level1, T_level2) on one shared ensemble, 0 < level1 < level2.

    At these step sizes a path cannot reach level2 without passing level1
    first, so both passage times come out of a single sweep; estimators
    for different (level, lambda) pairs built on them are each unbiased.
    """
    if not (0 < level1 < level2):
        raise DomainError("need 0 < level1 < level2")
    if dt <= 0 or horizon < dt:
        raise DomainError("need 0 < dt <= horizon")
    seeds = derive_seed_array(seed, np.arange(n_paths, dtype=np.uint64))
    n_steps = int(round(horizon / dt))
    return _native.hit_times_two_levels(seeds, n_steps, dt, level1, level2, bridge)


def laplace_report_from_times(
    times: np.ndarray, a: float, lam: float, horizon: float, dt: float, bridge: bool = True
) -> HittingLaplaceReport:
    """Assemble the Laplace-transform report from precomputed passage times."""
    n_paths = times.size
    capped = np.minimum(times, horizon)
    vals = np.exp(-lam * capped)
    hit = times <= horizon
    exact = math.exp(-abs(a) * math.sqrt(2.0 * lam))
    return HittingLaplaceReport(
        a,
        lam,
        float(vals.mean()),
        exact,
        float(vals.std(ddof=1) / math.sqrt(n_paths)),
        float((~hit).mean() * math.exp(-lam * horizon)),
        int(hit.sum()),
        n_paths,
        horizon,
        dt,
        bridge,
    )


@dataclass(frozen=True)
class InfimumResult:
    argmin: float
    value: float


def tail_rate_infimum(a: float, t: float) -> InfimumResult:
    """inf_{lam>0} (-lam a t + lam^2 t / 2) = -a^2 t / 2, attained at lam = a."""
    if a <= 0 or t <= 0:
        raise DomainError("a and t must be positive")
    return InfimumResult(argmin=a, value=-(a**2) * t / 2.0)
