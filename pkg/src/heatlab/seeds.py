"""Deterministic seed derivation for parallel Monte Carlo.

Every stochastic routine receives a 64-bit master seed and derives
per-replica (or per-stream) seeds with a splitmix64 chain, so replica i
sees the same numbers no matter how replicas are partitioned across
workers.
"""

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_INDEX_SALT = 0xA0761D6478BD642F


def splitmix64(state: int) -> int:
    """One splitmix64 output for a 64-bit state."""
    z = (state + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master_seed: int, *indices: int) -> int:
    """Derive a child seed from (master_seed, i0, i1, ...).

    Each index folds into the state through a splitmix64 step; distinct
    index tuples give independent streams for practical purposes.
    """
    s = master_seed & _MASK64
    for ix in indices:
        s = splitmix64((s ^ ((_INDEX_SALT * ((ix & _MASK64) + 1)) & _MASK64)) & _MASK64)
    return s


def generator(master_seed: int, *indices: int) -> np.random.Generator:
    """PCG64 generator owned by the stream (master_seed, *indices)."""
    return np.random.Generator(np.random.PCG64(derive_seed(master_seed, *indices)))


def derive_seed_array(master_seed: int, indices: np.ndarray) -> np.ndarray:
    """Vectorised derive_seed(master_seed, i) over an index array."""
    idx = np.asarray(indices, dtype=np.uint64)
    salt = np.uint64(_INDEX_SALT)
    one = np.uint64(1)
    s = np.uint64(master_seed & _MASK64) ^ (salt * (idx + one))
    z = s + np.uint64(_GOLDEN)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


# Stream tags used by the SPDE engine; kept here so the layout is documented
# in one place.  Replica r of a run with master seed m draws
#   white noise      from generator(m, r, STREAM_NOISE)
#   shared Brownian  from generator(m, r, STREAM_BROWNIAN)
#   bridge uniforms  from generator(m, r, STREAM_BRIDGE)
STREAM_NOISE = 0
STREAM_BROWNIAN = 1
STREAM_BRIDGE = 2
