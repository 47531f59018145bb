"""Counter-based random streams for reproducible Monte Carlo.

Draw (replicate r, index j) of the stream with a given seed is a pure
function of (seed, r, j): the splitmix64 output function applied at counter
position r * 2^32 + j.  Totals are therefore bit-identical for any execution
order or thread count.  The same mixing constants are inlined in the numba
path kernels; ``test_evaluate`` pins the two implementations against each
other.
"""

from __future__ import annotations

import numpy as np

from .models import normal_quantile

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64 = np.uint64


def _mix(h: np.ndarray) -> np.ndarray:
    h = (h ^ (h >> _U64(30))) * _MIX1
    h = (h ^ (h >> _U64(27))) * _MIX2
    return h ^ (h >> _U64(31))


def seed_key(seed: int) -> int:
    """Scramble a user seed into the stream key."""
    return int(_mix(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))[0])


def derive_seed(seed: int, tag: int) -> int:
    """Independent child seed for a sub-task (grid point, chunk, ...)."""
    return int(_mix(np.array([(seed_key(seed) + 0x632BE59BD9B4E019 * (tag + 1))
                              & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))[0])


def uniforms(seed: int, rep: np.ndarray, draw: np.ndarray) -> np.ndarray:
    """U(0,1) at stream positions (rep, draw); rep, draw < 2^32."""
    rep = np.asarray(rep, dtype=np.uint64)
    draw = np.asarray(draw, dtype=np.uint64)
    ctr = (rep << _U64(32)) + draw
    with np.errstate(over="ignore"):
        h = _mix(_U64(seed_key(seed)) + (ctr + _U64(1)) * _GOLDEN)
    return ((h >> _U64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def normals(seed: int, rep: np.ndarray, draw: np.ndarray) -> np.ndarray:
    """Standard normals at stream positions (rep, draw).

    Uses the rational quantile initializer (1.2e-9 accurate), ample for
    Monte Carlo and ~5x faster than the refined quantile.
    """
    return normal_quantile(uniforms(seed, rep, draw), refine=False)
