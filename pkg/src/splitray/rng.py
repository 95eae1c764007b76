"""Counter-based deterministic RNG for per-tile sample streams.

A splitmix64-style finalizer hashed over (seed, tile, pixel, frame, dim)
gives every ray its own reproducible uniforms, independent of worker
scheduling or tiling order.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

U64 = np.uint64
_GOLD = U64(0x9E3779B97F4A7C15)
_M1 = U64(0xBF58476D1CE4E5B9)
_M2 = U64(0x94D049BB133111EB)
_INV53 = 1.0 / (1 << 53)


@njit(cache=True, nogil=True, inline="always")
def mix64(x):
    x = (x ^ (x >> U64(30))) * _M1
    x = (x ^ (x >> U64(27))) * _M2
    return x ^ (x >> U64(31))


@njit(cache=True, nogil=True, inline="always")
def hash2(a, b):
    return mix64((a + _GOLD) ^ mix64(b + _GOLD))


@njit(cache=True, nogil=True, inline="always")
def uniform53(h):
    """Map a hash to a double in [0, 1)."""
    return float(h >> U64(11)) * _INV53


@njit(cache=True, nogil=True, inline="always")
def ray_uniforms(stream_key, pixel, frame):
    """Two uniforms for one (stream, pixel, frame) triple."""
    k = hash2(hash2(stream_key, U64(pixel)), U64(frame))
    return uniform53(hash2(k, U64(1))), uniform53(hash2(k, U64(2)))


@njit(cache=True, nogil=True, inline="always")
def cosine_direction(nx, ny, nz, u1, u2):
    """Cosine-weighted direction in the hemisphere of unit normal n."""
    # branchless orthonormal basis (Duff et al.)
    sign = 1.0 if nz >= 0.0 else -1.0
    a = -1.0 / (sign + nz)
    b = nx * ny * a
    t0x = 1.0 + sign * nx * nx * a
    t0y = sign * b
    t0z = -sign * nx
    t1x = b
    t1y = sign + ny * ny * a
    t1z = -ny
    r = math.sqrt(u1)
    phi = 2.0 * math.pi * u2
    x = r * math.cos(phi)
    y = r * math.sin(phi)
    z = math.sqrt(max(0.0, 1.0 - u1))
    return (x * t0x + y * t1x + z * nx,
            x * t0y + y * t1y + z * ny,
            x * t0z + y * t1z + z * nz)
