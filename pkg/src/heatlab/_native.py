"""Compiled inner loops for path-level Monte Carlo.

Each path owns a splitmix64 counter stream derived from
(master_seed, path_index), so results are bit-reproducible at any thread
count: thread scheduling only changes who fills which slot of the output
array.  Normals come from a 128-layer ziggurat whose index/value/sign bits
are taken from disjoint fields of one 64-bit word (fresh words feed the
rare wedge/tail branches).
"""

import math

import numpy as np
from numba import njit, prange

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

# Ziggurat tables for the standard normal (Marsaglia-Tsang layout,
# 128 layers, 2^31 integer scale).
_ZIG_R = 3.442619855899
_ZIG_V = 9.91256303526217e-3
_ZIG_M1 = 2147483648.0


def _build_ziggurat():
    kn = np.zeros(128, dtype=np.int64)
    wn = np.zeros(128, dtype=np.float64)
    fn = np.zeros(128, dtype=np.float64)
    dn = tn = _ZIG_R
    q = _ZIG_V / math.exp(-0.5 * dn * dn)
    kn[0] = int((dn / q) * _ZIG_M1)
    kn[1] = 0
    wn[0] = q / _ZIG_M1
    wn[127] = dn / _ZIG_M1
    fn[0] = 1.0
    fn[127] = math.exp(-0.5 * dn * dn)
    for i in range(126, 0, -1):
        dn = math.sqrt(-2.0 * math.log(_ZIG_V / dn + math.exp(-0.5 * dn * dn)))
        kn[i + 1] = int((dn / tn) * _ZIG_M1)
        tn = dn
        fn[i] = math.exp(-0.5 * dn * dn)
        wn[i] = dn / _ZIG_M1
    return kn, wn, fn


_ZIG_KN, _ZIG_WN, _ZIG_FN = _build_ziggurat()


@njit(inline="always")
def _next_u64(state):
    s = state + _GOLDEN
    z = s
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31)), s


@njit(inline="always")
def _next_unit(state):
    z, state = _next_u64(state)
    return (z >> np.uint64(11)) * 1.1102230246251565e-16, state  # 2^-53


@njit(inline="always")
def _next_normal(state):
    while True:
        z, state = _next_u64(state)
        iz = np.int64(z & np.uint64(127))
        hz = np.int64(np.int32(z >> np.uint64(16)))
        if abs(hz) < _ZIG_KN[iz]:
            return hz * _ZIG_WN[iz], state
        if iz == 0:
            # tail beyond r, Marsaglia's exponential construction
            while True:
                u1, state = _next_unit(state)
                u2, state = _next_unit(state)
                x = -math.log(u1 + 1e-300) / _ZIG_R
                y = -math.log(u2 + 1e-300)
                if y + y >= x * x:
                    break
            val = _ZIG_R + x
            return (val if hz > 0 else -val), state
        x = hz * _ZIG_WN[iz]
        u, state = _next_unit(state)
        if _ZIG_FN[iz] + u * (_ZIG_FN[iz - 1] - _ZIG_FN[iz]) < math.exp(-0.5 * x * x):
            return x, state


@njit(cache=True, parallel=True, fastmath=True)
def hit_times(seeds, n_steps, dt, level, bridge):
    """First passage time of each path to `level`, inf if not reached.

    Grid crossings are timed by linear interpolation; with `bridge`,
    same-side segments fire with the Brownian-bridge crossing probability
    exp(-2 d0 d1 / dt) and are timed at the segment midpoint.
    """
    n = seeds.shape[0]
    out = np.empty(n, dtype=np.float64)
    aa = abs(level)
    sqdt = math.sqrt(dt)
    thresh = 6.0 * sqdt
    for p in prange(n):
        if aa == 0.0:
            out[p] = 0.0
            continue
        state = seeds[p]
        b = 0.0
        d0 = aa
        t_hit = np.inf
        for k in range(n_steps):
            z, state = _next_normal(state)
            b1 = b + sqdt * z
            if b1 >= aa:
                t_hit = k * dt + dt * (aa - b) / (b1 - b)
                break
            d1 = aa - b1
            if bridge and (d1 < thresh or d0 < thresh):
                u, state = _next_unit(state)
                if u < math.exp(-2.0 * d0 * d1 / dt):
                    t_hit = k * dt + 0.5 * dt
                    break
            b = b1
            d0 = d1
        out[p] = t_hit
    return out


@njit(cache=True, parallel=True, fastmath=True)
def hit_times_two_levels(seeds, n_steps, dt, level1, level2, bridge):
    """First passage to two positive levels (level1 < level2) per path.

    One shared ensemble: a path cannot reach level2 without first passing
    level1 at this step size, so detection runs in two phases.  Returns
    (T1, T2) with inf marking no passage within the horizon.
    """
    n = seeds.shape[0]
    t1 = np.empty(n, dtype=np.float64)
    t2 = np.empty(n, dtype=np.float64)
    sqdt = math.sqrt(dt)
    thresh = 6.0 * sqdt
    for p in prange(n):
        state = seeds[p]
        b = 0.0
        target = level1
        d0 = level1
        out1 = np.inf
        out2 = np.inf
        for k in range(n_steps):
            z, state = _next_normal(state)
            b1 = b + sqdt * z
            hit_t = -1.0
            if b1 >= target:
                hit_t = k * dt + dt * (target - b) / (b1 - b)
            elif bridge and (d0 < thresh or target - b1 < thresh):
                u, state = _next_unit(state)
                if u < math.exp(-2.0 * d0 * (target - b1) / dt):
                    hit_t = k * dt + 0.5 * dt
            if hit_t >= 0.0:
                if target == level1:
                    out1 = hit_t
                    target = level2
                else:
                    out2 = hit_t
                    b = b1
                    d0 = target - b1
                    break
            b = b1
            d0 = target - b1
        t1[p] = out1
        t2[p] = out2
    return t1, t2


@njit(cache=True, parallel=True, fastmath=True)
def hit_times_grid(seeds, n_steps, dt, level):
    """Raw grid estimator: time of the first grid point at/above the level."""
    n = seeds.shape[0]
    out = np.empty(n, dtype=np.float64)
    aa = abs(level)
    sqdt = math.sqrt(dt)
    for p in prange(n):
        if aa == 0.0:
            out[p] = 0.0
            continue
        state = seeds[p]
        b = 0.0
        t_hit = np.inf
        for k in range(n_steps):
            z, state = _next_normal(state)
            b = b + sqdt * z
            if b >= aa:
                t_hit = (k + 1) * dt
                break
        out[p] = t_hit
    return out


@njit(cache=True, parallel=True)
def normal_sample(seeds, n_each):
    """n_each consecutive ziggurat normals per seed (statistical checks)."""
    n = seeds.shape[0]
    out = np.empty((n, n_each), dtype=np.float64)
    for p in prange(n):
        state = seeds[p]
        for k in range(n_each):
            z, state = _next_normal(state)
            out[p, k] = z
    return out
