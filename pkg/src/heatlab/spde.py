"""Discretised mild solution of the noisy heat equation.

Time stepping is spectral (exponential in the generator, explicit in the
noise): one step maps u to

    S_dt [ u + sigma(u) * f(B_t, t) * sqrt(dt/dx) * xi ],

with S_dt the exact periodic semigroup step.  Unrolling the recursion
shows the step solution solves the discrete fixed-point equation
u = A u + P_t u0 with the same kernel weights, which is what the Picard
iteration below verifies at desk scale.

The multiplicative factor f is evaluated on one shared Brownian path per
replica (a per-site independent variant sits behind ModelSpec.shared_path
for sensitivity studies).  In frozen-hitting mode the factor is the
Gaussian mixture frozen at (level, first-passage time of the shared
path), realising the stopped form of the equation directly.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels as _kernels
from . import levy as _levy
from .brownian import PathSample
from .errors import BlowUpError, ConfigurationError, DomainError
from .kernels import GridSpec
from .martingale import (
    exp_martingale,
    frozen_mixture_value,
    harmonic_mixture_value,
)
from .seeds import STREAM_BRIDGE, STREAM_BROWNIAN, STREAM_NOISE, generator

NOISE_MODES = ("none", "white", "capped_martingale", "harmonic_mixture", "frozen_hitting")

_REPLICA_BLOCK = 1024
_STEP_CHUNK = 64


@dataclass(frozen=True)
class ModelSpec:
    """One SPDE instance: generator order, affine sigma, noise mode, u0."""

    alpha: float = 2.0
    lip: float = 0.0
    intercept: float = 0.0
    l_sigma: float = 0.0
    noise_mode: str = "white"
    lambda0: float = 0.0
    c: float = 1.0
    hit_level: float = 0.0
    u0: float | np.ndarray = 1.0
    shared_path: bool = True

    def __post_init__(self):
        if not (1.0 < self.alpha <= 2.0):
            raise DomainError(f"alpha must lie in (1, 2], got {self.alpha!r}")
        if self.lip < 0:
            raise DomainError("lip must be nonnegative")
        if self.noise_mode not in NOISE_MODES:
            raise DomainError(f"unknown noise mode {self.noise_mode!r}")
        if self.l_sigma > 0 and (self.intercept != 0.0 or self.l_sigma > self.lip):
            raise DomainError(
                "lower slope requires intercept = 0 and l_sigma <= lip "
                "so that |sigma(u)| >= l_sigma |u| holds"
            )
        if self.noise_mode == "harmonic_mixture" and self.c <= 0:
            raise DomainError("harmonic_mixture requires c > 0")

    def sigma(self, u):
        return self.lip * u + self.intercept

    def u0_values(self, grid: GridSpec) -> np.ndarray:
        if np.ndim(self.u0) == 0:
            return np.full(grid.n_points, float(self.u0))
        u0 = np.asarray(self.u0, dtype=float)
        if u0.shape != (grid.n_points,):
            raise ConfigurationError("u0 grid function does not match the grid")
        return u0.copy()


@dataclass(frozen=True)
class NoiseSlab:
    """Materialised driving noise for one replica (used by Picard runs).

    increments[k] is the N(0,1) white-noise slice for the step t_k -> t_{k+1};
    the shared Brownian path uses a disjoint stream of the same seed.
    NoiseSlabs are never serialised; they are regenerated from seeds.
    """

    grid: GridSpec
    dt: float
    n_steps: int
    seed: int
    increments: np.ndarray
    brownian: PathSample | None

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)


def make_noise_slab(
    grid: GridSpec, dt: float, n_steps: int, seed: int, with_brownian: bool = True
) -> NoiseSlab:
    """Draw the replica's noise using the documented stream layout."""
    if dt <= 0 or n_steps < 1:
        raise DomainError("need dt > 0 and n_steps >= 1")
    incr = generator(seed, STREAM_NOISE).standard_normal((n_steps, grid.n_points))
    path = None
    if with_brownian:
        db = generator(seed, STREAM_BROWNIAN).standard_normal(n_steps) * math.sqrt(dt)
        path = PathSample(
            dt=dt, n_steps=n_steps, seed=seed, values=np.concatenate([[0.0], np.cumsum(db)])
        )
    return NoiseSlab(grid=grid, dt=dt, n_steps=n_steps, seed=seed, increments=incr, brownian=path)


@dataclass(frozen=True)
class SolutionField:
    """u(x, t) samples on the grid at the saved times."""

    grid: GridSpec
    times: np.ndarray
    values: np.ndarray  # (n_times, n_points)
    model: ModelSpec
    seed: int
    blowup_step: int | None = None

    @property
    def blown_up(self) -> bool:
        return self.blowup_step is not None


def noise_factor(model: ModelSpec, b: float, t: float, hit_time: float | None = None):
    """Multiplicative coefficient f at (B_t = b, t) for the model's mode."""
    mode = model.noise_mode
    if mode == "none":
        raise ConfigurationError("noise mode 'none' has no noise factor")
    if mode == "white":
        return 1.0
    if mode == "capped_martingale":
        return exp_martingale(model.lambda0, b, t)
    if mode == "harmonic_mixture":
        return harmonic_mixture_value(model.c, b, t)
    if hit_time is None:
        raise ConfigurationError("frozen_hitting factor needs the replica's hit time")
    return frozen_mixture_value(model.c, model.hit_level, hit_time)


def step(
    model: ModelSpec,
    grid: GridSpec,
    state: np.ndarray,
    noise: np.ndarray | None,
    b_t: float,
    t: float,
    dt: float,
    hit_time: float | None = None,
) -> np.ndarray:
    """One semi-implicit step; raises BlowUpError on non-finite output."""
    state = np.asarray(state, dtype=float)
    mult = np.exp(-dt * grid.xi_r**model.alpha)
    if model.noise_mode == "none":
        work = state
    else:
        fac = noise_factor(model, b_t, t, hit_time)
        work = state + model.sigma(state) * fac * math.sqrt(dt / grid.dx) * noise
    out = np.fft.irfft(np.fft.rfft(work) * mult, n=grid.n_points)
    if not np.all(np.isfinite(out)):
        raise BlowUpError(int(round(t / dt)) + 1, t + dt)
    return out


def _frozen_hit_times(
    level: float, master_seed: int, indices, dt: float, n_steps: int
) -> np.ndarray:
    """Bridge-corrected first-passage time of each replica's shared path."""
    r = len(indices)
    if level == 0.0:
        return np.zeros(r)
    out = np.full(r, np.inf)
    sq = math.sqrt(dt)
    sign = 1.0 if level > 0 else -1.0
    aa = abs(level)
    for row, i in enumerate(indices):
        incr = generator(master_seed, i, STREAM_BROWNIAN).standard_normal(n_steps)
        w = sign * sq * np.cumsum(incr)
        prev = np.concatenate([[0.0], w[:-1]])
        crossed = w >= aa
        u = generator(master_seed, i, STREAM_BRIDGE).random(n_steps)
        below = ~crossed & (prev < aa)
        p = np.zeros(n_steps)
        p[below] = np.exp(-2.0 * (aa - prev[below]) * (aa - w[below]) / dt)
        events = crossed | (below & (u < p))
        idx = np.flatnonzero(events)
        if idx.size:
            k = int(idx[0])
            if crossed[k]:
                out[row] = k * dt + dt * (aa - prev[k]) / (w[k] - prev[k])
            else:
                out[row] = k * dt + 0.5 * dt
    return out


def _evolve_block(
    model: ModelSpec,
    grid: GridSpec,
    dt: float,
    n_steps: int,
    master_seed: int,
    indices,
    save_steps,
    collect: str,
):
    """Evolve len(indices) replicas; replica i draws only from its own streams.

    collect 'x0' records u at the grid centre, 'field' the whole grid.
    Returns (data, blowup_steps) with blowup < 0 meaning none detected.
    """
    r = len(indices)
    n = grid.n_points
    mode = model.noise_mode
    mult = np.exp(-dt * grid.xi_r**model.alpha)
    scale = math.sqrt(dt / grid.dx)
    state = np.tile(model.u0_values(grid), (r, 1))
    x0 = n // 2
    save_steps = list(save_steps)
    save_pos = {k: i for i, k in enumerate(save_steps)}
    if collect == "x0":
        data = np.empty((r, len(save_steps)))
    else:
        data = np.empty((r, len(save_steps), n))
    blow = np.full(r, -1, dtype=np.int64)

    def record(k):
        i = save_pos[k]
        if collect == "x0":
            data[:, i] = state[:, x0]
        else:
            data[:, i] = state
        bad = ~np.isfinite(state).all(axis=1)
        blow[(blow < 0) & bad] = k

    if 0 in save_pos:
        record(0)
    needs_noise = mode != "none"
    needs_b = mode in ("capped_martingale", "harmonic_mixture")
    noise_gens = [generator(master_seed, i, STREAM_NOISE) for i in indices] if needs_noise else None
    brown_gens = [generator(master_seed, i, STREAM_BROWNIAN) for i in indices] if needs_b else None
    if needs_b:
        b = np.zeros((r, n)) if not model.shared_path else np.zeros(r)
    if mode == "frozen_hitting":
        hit = _frozen_hit_times(model.hit_level, master_seed, indices, dt, n_steps)
        frozen = np.array(
            [frozen_mixture_value(model.c, model.hit_level, t) if np.isfinite(t) else np.nan
             for t in hit]
        )
        blow[~np.isfinite(hit)] = 0  # never hit within the horizon: flagged out
    sqdt = math.sqrt(dt)
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        for c0 in range(0, n_steps, _STEP_CHUNK):
            c1 = min(c0 + _STEP_CHUNK, n_steps)
            m = c1 - c0
            if needs_noise:
                noise = np.empty((r, m, n))
                for row in range(r):
                    noise[row] = noise_gens[row].standard_normal((m, n))
            if needs_b:
                if model.shared_path:
                    db = np.empty((r, m))
                    for row in range(r):
                        db[row] = brown_gens[row].standard_normal(m)
                else:
                    db = np.empty((r, m, n))
                    for row in range(r):
                        db[row] = brown_gens[row].standard_normal((m, n))
            for j in range(m):
                k = c0 + j
                if mode == "none":
                    work = state
                else:
                    t = k * dt
                    if mode == "white":
                        forcing = model.sigma(state) * noise[:, j]
                    elif mode == "capped_martingale":
                        fac = np.exp(model.lambda0 * b - 0.5 * model.lambda0**2 * t)
                        fac = fac[:, None] if model.shared_path else fac
                        forcing = model.sigma(state) * noise[:, j] * fac
                    elif mode == "harmonic_mixture":
                        fac = (
                            model.c
                            * math.sqrt(2.0 * math.pi / (1.0 + t))
                            * np.exp(b**2 / (2.0 * (1.0 + t)))
                        )
                        fac = fac[:, None] if model.shared_path else fac
                        forcing = model.sigma(state) * noise[:, j] * fac
                    else:  # frozen_hitting
                        forcing = model.sigma(state) * noise[:, j] * frozen[:, None]
                    work = state + forcing * scale
                    if needs_b:
                        b = b + sqdt * db[:, j]
                state = np.fft.irfft(np.fft.rfft(work, axis=-1) * mult, n=n, axis=-1)
                if (k + 1) in save_pos:
                    record(k + 1)
    return data, blow


def _partition(n_replicas: int, block: int = _REPLICA_BLOCK):
    return [range(s, min(s + block, n_replicas)) for s in range(0, n_replicas, block)]


def evolve_ensemble(
    model: ModelSpec,
    grid: GridSpec,
    dt: float,
    n_steps: int,
    n_replicas: int,
    master_seed: int,
    save_steps,
    collect: str = "x0",
    workers: int = 1,
):
    """Replica-parallel evolution; deterministic for any worker count.

    Replicas are split into fixed blocks; each block's rows depend only on
    (master_seed, replica_index), and results are written into their
    replica slots, so the output is identical however blocks land on
    threads.
    """
    save_steps = sorted(set(int(k) for k in save_steps))
    if save_steps and (save_steps[0] < 0 or save_steps[-1] > n_steps):
        raise DomainError("save steps outside [0, n_steps]")
    blocks = _partition(n_replicas)
    if collect == "x0":
        data = np.empty((n_replicas, len(save_steps)))
    else:
        data = np.empty((n_replicas, len(save_steps), grid.n_points))
    blow = np.empty(n_replicas, dtype=np.int64)

    def run(block):
        d, bl = _evolve_block(model, grid, dt, n_steps, master_seed, block, save_steps, collect)
        data[block.start : block.stop] = d
        blow[block.start : block.stop] = bl

    if workers <= 1 or len(blocks) == 1:
        for blk in blocks:
            run(blk)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, blocks))
    times = dt * np.asarray(save_steps, dtype=float)
    return times, data, blow


def simulate(
    model: ModelSpec,
    grid: GridSpec,
    dt: float,
    horizon: float,
    seed: int,
    save_every: int = 1,
) -> SolutionField:
    """Single replica (index 0 of the ensemble layout with this master seed)."""
    if horizon <= 0 or dt <= 0 or dt > horizon:
        raise DomainError("need 0 < dt <= horizon")
    n_steps = int(round(horizon / dt))
    save_steps = sorted(set(list(range(0, n_steps + 1, max(1, save_every))) + [n_steps]))
    times, data, blow = evolve_ensemble(
        model, grid, dt, n_steps, 1, seed, save_steps, collect="field"
    )
    return SolutionField(
        grid=grid,
        times=times,
        values=data[0],
        model=model,
        seed=seed,
        blowup_step=None if blow[0] < 0 else int(blow[0]),
    )


def solution_to_csv(field: SolutionField, fh) -> None:
    """6-column-free long format: t,x,u rows over the saved snapshots."""
    fh.write("t,x,u\n")
    x = field.grid.x
    for ti, t in enumerate(field.times):
        for xi_, u in zip(x, field.values[ti]):
            fh.write(f"{t:.17g},{xi_:.17g},{u:.17g}\n")


# ---------------------------------------------------------------------------
# The stochastic-convolution operator and Picard iteration
# ---------------------------------------------------------------------------


def _capped_prefactor(model: ModelSpec, slab: NoiseSlab) -> np.ndarray:
    """Running max of the exponential martingale along the shared path."""
    if model.lambda0 == 0.0:
        return np.ones(slab.n_steps + 1)
    if slab.brownian is None:
        raise ConfigurationError("slab carries no Brownian path for the martingale cap")
    m = np.exp(model.lambda0 * slab.brownian.values - 0.5 * model.lambda0**2 * slab.times)
    return np.maximum.accumulate(m)


def _require_capped(model: ModelSpec):
    if model.noise_mode != "capped_martingale":
        raise ConfigurationError(
            "the convolution operator is defined for capped_martingale mode "
            f"(lambda0 = 0 gives the plain kernel); got {model.noise_mode!r}"
        )


def apply_convolution_operator(
    model: ModelSpec, slab: NoiseSlab, values: np.ndarray
) -> np.ndarray:
    """(A values)(t_k) for every k at once, via the semigroup recursion.

    values has shape (..., n_steps+1, n_points) on the slab's time grid.
    The multiplier recursion g_k = m (g_{k-1} + h_{k-1}) reproduces the
    kernel-weighted sum with weights exp(-|xi|^alpha (k-j) dt) exactly.
    """
    _require_capped(model)
    grid = slab.grid
    n = grid.n_points
    if values.shape[-1] != n or values.shape[-2] != slab.n_steps + 1:
        raise ConfigurationError("field does not match the slab's grid")
    mult = np.exp(-slab.dt * grid.xi_r**model.alpha)
    scale = math.sqrt(slab.dt / grid.dx)
    pref = _capped_prefactor(model, slab)
    out = np.zeros_like(values)
    ghat = np.zeros(values.shape[:-2] + (grid.xi_r.size,), dtype=complex)
    for k in range(1, slab.n_steps + 1):
        h = model.sigma(values[..., k - 1, :]) * slab.increments[k - 1] * scale
        ghat = mult * (ghat + np.fft.rfft(h, axis=-1))
        out[..., k, :] = pref[k] * np.fft.irfft(ghat, n=n, axis=-1)
    if not np.all(np.isfinite(out)):
        raise BlowUpError(-1, math.nan)
    return out


def stochastic_convolution(
    model: ModelSpec, values: np.ndarray, slab: NoiseSlab, t: float
) -> np.ndarray:
    """(A values)(x, t) at a single slab time, by the direct kernel sum.

    Cross-checkable against apply_convolution_operator; the two evaluate
    the same discrete Walsh sum in different orders.
    """
    _require_capped(model)
    grid = slab.grid
    k = int(round(t / slab.dt))
    if not (0 <= k <= slab.n_steps) or abs(k * slab.dt - t) > 1e-9 * max(slab.dt, t):
        raise ConfigurationError(f"t = {t:g} is not on the slab's time grid")
    if values.shape != (slab.n_steps + 1, grid.n_points):
        raise ConfigurationError("field does not match the slab's grid")
    scale = math.sqrt(slab.dt / grid.dx)
    acc = np.zeros(grid.xi_r.size, dtype=complex)
    for j in range(k):
        h = model.sigma(values[j]) * slab.increments[j] * scale
        lag = (k - j) * slab.dt
        acc += np.fft.rfft(h) * np.exp(-lag * grid.xi_r**model.alpha)
    pref = _capped_prefactor(model, slab)[k]
    return pref * np.fft.irfft(acc, n=grid.n_points)


def picard_solve(
    model: ModelSpec, slab: NoiseSlab, n_iter: int, horizon: float | None = None
) -> list[SolutionField]:
    """Iterates v_{n+1} = A v_n + P_t u0 on frozen noise, v_0 = u0.

    Successive differences contract geometrically in the weighted norm
    once the slab's horizon and beta put the operator inside its
    contraction regime.
    """
    _require_capped(model)
    if n_iter < 2:
        raise DomainError("need n_iter >= 2")
    if horizon is not None and abs(horizon - slab.dt * slab.n_steps) > 1e-9:
        raise ConfigurationError("horizon does not match the slab")
    grid = slab.grid
    nt = slab.n_steps + 1
    u0 = model.u0_values(grid)
    heat = np.empty((nt, grid.n_points))
    heat[0] = u0
    mult = np.exp(-slab.dt * grid.xi_r**model.alpha)
    spec = np.fft.rfft(u0)
    for k in range(1, nt):
        spec = spec * mult
        heat[k] = np.fft.irfft(spec, n=grid.n_points)
    iterates = [np.tile(u0, (nt, 1))]
    for _ in range(n_iter):
        nxt = apply_convolution_operator(model, slab, iterates[-1]) + heat
        iterates.append(nxt)
    return [
        SolutionField(grid=grid, times=slab.times, values=v, model=model, seed=slab.seed)
        for v in iterates
    ]


def weighted_norm(values: np.ndarray, times: np.ndarray, p: int, beta: float) -> float:
    """{ sup_t sup_x e^(-beta t) mean_replicas |u|^p }^(1/p).

    values: (n_replicas, n_times, n_points); the ensemble mean stands in
    for the expectation.
    """
    if p < 2 or p % 2 != 0:
        raise DomainError(f"p must be an even integer >= 2, got {p!r}")
    if beta <= 0:
        raise DomainError("beta must be positive")
    values = np.asarray(values, dtype=float)
    if values.ndim != 3 or values.shape[0] < 1:
        raise DomainError("need a nonempty ensemble of shape (R, n_times, n_points)")
    moment = np.mean(np.abs(values) ** p, axis=0)
    weighted = np.exp(-beta * np.asarray(times))[:, None] * moment
    return float(np.max(weighted) ** (1.0 / p))


def fields_norm(fields, p: int, beta: float) -> float:
    """weighted_norm over a list of SolutionFields on one time grid."""
    if not fields:
        raise DomainError("empty ensemble")
    values = np.stack([f.values for f in fields])
    return weighted_norm(values, fields[0].times, p, beta)


@dataclass(frozen=True)
class ContractionReport:
    lhs: float
    rhs: float
    factor: float  # theoretical contraction factor Q_p lip sqrt(upsilon(2 beta/p))
    tolerance: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs * (1.0 + self.tolerance)

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else math.inf


def contraction_check(
    model: ModelSpec,
    p: int,
    beta: float,
    u_values: np.ndarray,
    v_values: np.ndarray,
    times: np.ndarray,
    slabs,
    z_p: float | None = None,
    tolerance: float = 0.1,
) -> ContractionReport:
    """|| A u - A v ||_{p,beta} against the Lipschitz kernel bound.

    u_values, v_values: (R, n_steps+1, n_points) ensembles on the same
    grids and noise slabs (one slab per replica).  t0 in the prefactor is
    the slab horizon, which majorises the martingale cap on the window.
    The default 10% tolerance covers ensemble and discretisation error.
    """
    if u_values.shape != v_values.shape:
        raise ConfigurationError("ensemble shapes differ")
    if len(slabs) != u_values.shape[0]:
        raise ConfigurationError("need one slab per replica")
    au = np.stack([apply_convolution_operator(model, s, u) for s, u in zip(slabs, u_values)])
    av = np.stack([apply_convolution_operator(model, s, v) for s, v in zip(slabs, v_values)])
    lhs = weighted_norm(au - av, times, p, beta)
    dist = weighted_norm(u_values - v_values, times, p, beta)
    if z_p is None:
        z_p = 2.0 * math.sqrt(p)
    horizon = float(times[-1])
    q_p = z_p * (p / (p - 1.0)) * math.exp(model.lambda0**2 * horizon * (p - 1.0) / 2.0)
    exponent = _levy.stable_exponent(model.alpha)
    factor = q_p * model.lip * math.sqrt(_levy.upsilon(exponent, 2.0 * beta / p))
    return ContractionReport(lhs=lhs, rhs=factor * dist, factor=factor, tolerance=tolerance)


@dataclass(frozen=True)
class EnergyCheckReport:
    """sup_t e^(-beta t) int_0^t I(s) ds and its Laplace form against upsilon."""

    beta: float
    t_max: float
    sup_weighted: float
    laplace: float
    upsilon: float

    @property
    def bounded(self) -> bool:
        return (
            self.sup_weighted <= self.upsilon * (1.0 + 1e-3)
            and self.laplace <= self.upsilon * (1.0 + 1e-3)
        )

    @property
    def converged(self) -> bool:
        return abs(self.laplace - self.upsilon) <= 1e-3 * self.upsilon


def kernel_energy_check(
    alpha: float, beta: float, t_max: float = 50.0, n_nodes: int = 2001
) -> EnergyCheckReport:
    """Kernel-energy route vs the spectral quadrature route.

    lhs integrates synthesised-kernel energies in time; rhs quadratures
    the exponent.  The sup-weighted form is bounded by upsilon(beta) and
    the Laplace form converges to it as t_max grows.
    """
    times, cum = _kernels.energy_profile(alpha, t_max, n_nodes)
    sup_weighted = float(np.max(np.exp(-beta * times) * cum))
    laplace = _kernels.upsilon_laplace(alpha, beta, t_max, n_nodes)
    ups = _levy.upsilon(_levy.stable_exponent(alpha), beta)
    return EnergyCheckReport(beta, t_max, sup_weighted, laplace, ups)
