"""Camera-centered cascaded distance field.

Each cascade is a fixed-resolution unsigned distance grid whose voxel size
doubles per level, built by voxelize -> jump flooding -> fast sweeping.
Distances are stored at cell centers and sampled with trilinear
interpolation; cells of an empty cascade hold the +inf sentinel.

Builds and rolls are single-writer. Published state is the packed array
snapshot handed to the tracing kernels; a roll recomputes cascades first
and swaps the snapshot at the end, so concurrent readers never observe a
half-updated field.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .errors import DisplacementTooLargeError
from .voxelize import OccupancyGrid, voxelize_into, voxelize_lattice

SWEEP_TOL_FACTOR = 1e-4
_NO_SEED = np.int64(2) ** 62


# ---------------------------------------------------------------------------
# jump flooding
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _jfa_passes(occ, res):
    """Double-buffered jump flooding over steps res/2, res/4, ..., 1.

    Returns per-cell nearest seed cell indices (-1 when no seed exists)
    and squared cell-index distances (_NO_SEED sentinel when empty).
    """
    seed = np.full((res, res, res, 3), -1, dtype=np.int32)
    best = np.full((res, res, res), _NO_SEED, dtype=np.int64)
    for i in range(res):
        for j in range(res):
            for k in range(res):
                if occ[i, j, k]:
                    seed[i, j, k, 0] = i
                    seed[i, j, k, 1] = j
                    seed[i, j, k, 2] = k
                    best[i, j, k] = 0
    step = res // 2
    seed_prev = seed.copy()
    best_prev = best.copy()
    while step >= 1:
        seed_prev[:] = seed
        best_prev[:] = best
        for i in range(res):
            for j in range(res):
                for k in range(res):
                    b = best_prev[i, j, k]
                    s0 = seed_prev[i, j, k, 0]
                    s1 = seed_prev[i, j, k, 1]
                    s2 = seed_prev[i, j, k, 2]
                    for di in range(-1, 2):
                        ni = i + di * step
                        if ni < 0 or ni >= res:
                            continue
                        for dj in range(-1, 2):
                            nj = j + dj * step
                            if nj < 0 or nj >= res:
                                continue
                            for dk in range(-1, 2):
                                nk = k + dk * step
                                if nk < 0 or nk >= res:
                                    continue
                                c0 = seed_prev[ni, nj, nk, 0]
                                if c0 < 0:
                                    continue
                                c1 = seed_prev[ni, nj, nk, 1]
                                c2 = seed_prev[ni, nj, nk, 2]
                                d2 = ((i - c0) * (i - c0)
                                      + (j - c1) * (j - c1)
                                      + (k - c2) * (k - c2))
                                if d2 < b:
                                    b = d2
                                    s0 = c0
                                    s1 = c1
                                    s2 = c2
                    best[i, j, k] = b
                    seed[i, j, k, 0] = s0
                    seed[i, j, k, 1] = s1
                    seed[i, j, k, 2] = s2
        step //= 2
    return seed, best


def jump_flood(grid: OccupancyGrid):
    """Nearest-seed positions and distances for an occupancy grid.

    Returns (nearest_seed, distance): world-space seed positions of shape
    (R, R, R, 3) and distances in meters. Cells of an empty grid hold +inf
    (and an infinite seed position).
    """
    res = grid.resolution
    seed_idx, best = _jfa_passes(grid.bits, res)
    h = grid.voxel_size
    distance = np.where(best < _NO_SEED, np.sqrt(best.astype(np.float64)) * h, np.inf)
    nearest = np.where(
        seed_idx[..., :1] >= 0,
        grid.origin[None, None, None, :] + (seed_idx.astype(np.float64) + 0.5) * h,
        np.inf,
    )
    return nearest, distance


# ---------------------------------------------------------------------------
# fast sweeping
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _sweep_round(u, h):
    """One round of the 8 Godunov upwind sweep orderings; returns the
    largest per-cell decrease. Updates never increase a value."""
    res = u.shape[0]
    maxchg = 0.0
    big = np.inf
    for ordering in range(8):
        if ordering & 1:
            i0, i1, istep = res - 1, -1, -1
        else:
            i0, i1, istep = 0, res, 1
        if ordering & 2:
            j0, j1, jstep = res - 1, -1, -1
        else:
            j0, j1, jstep = 0, res, 1
        if ordering & 4:
            k0, k1, kstep = res - 1, -1, -1
        else:
            k0, k1, kstep = 0, res, 1
        for i in range(i0, i1, istep):
            for j in range(j0, j1, jstep):
                for k in range(k0, k1, kstep):
                    a = big
                    if i > 0 and u[i - 1, j, k] < a:
                        a = u[i - 1, j, k]
                    if i < res - 1 and u[i + 1, j, k] < a:
                        a = u[i + 1, j, k]
                    b = big
                    if j > 0 and u[i, j - 1, k] < b:
                        b = u[i, j - 1, k]
                    if j < res - 1 and u[i, j + 1, k] < b:
                        b = u[i, j + 1, k]
                    c = big
                    if k > 0 and u[i, j, k - 1] < c:
                        c = u[i, j, k - 1]
                    if k < res - 1 and u[i, j, k + 1] < c:
                        c = u[i, j, k + 1]
                    # sort a <= b <= c
                    if a > b:
                        a, b = b, a
                    if b > c:
                        b, c = c, b
                    if a > b:
                        a, b = b, a
                    cand = a + h
                    if cand > b:
                        # |grad| from two axes
                        q = 2.0 * h * h - (a - b) * (a - b)
                        cand = 0.5 * (a + b + math.sqrt(q))
                        if cand > c:
                            s3 = a + b + c
                            q3 = s3 * s3 - 3.0 * (a * a + b * b + c * c - h * h)
                            if q3 > 0.0:
                                cand = (s3 + math.sqrt(q3)) / 3.0
                    old = u[i, j, k]
                    if cand < old:
                        u[i, j, k] = cand
                        chg = old - cand
                        if chg > maxchg:
                            maxchg = chg
    return maxchg


def fast_sweep(distance: np.ndarray, voxel_size: float, tol: float | None = None) -> np.ndarray:
    """Godunov eikonal refinement (|grad u| = 1) of a nonnegative grid.

    Sweeps all 8 orderings repeatedly until the largest per-cell change
    falls below 1e-4 * voxel_size. Values only ever decrease, so exact
    zeros on seed cells are preserved. Returns a new array.
    """
    if tol is None:
        tol = SWEEP_TOL_FACTOR * voxel_size
    u = np.ascontiguousarray(distance, dtype=np.float64).copy()
    for _ in range(4 * u.shape[0]):
        if _sweep_round(u, voxel_size) < tol:
            break
    return u


# ---------------------------------------------------------------------------
# cascades
# ---------------------------------------------------------------------------

@dataclass
class FieldConfig:
    """Cascade stack configuration. ``field_only_mode`` halves the voxel
    size (doubling effective resolution) as used by the pure field tracer."""

    cascade_count: int = 5
    cascade_resolution: int = 64
    finest_voxel_m: float = 0.1
    field_only_mode: bool = False

    @property
    def effective_finest_voxel(self) -> float:
        return self.finest_voxel_m * (0.5 if self.field_only_mode else 1.0)

    @classmethod
    def from_dict(cls, d: dict) -> "FieldConfig":
        return cls(
            cascade_count=int(d.get("cascade_count", 5)),
            cascade_resolution=int(d.get("cascade_resolution", 64)),
            finest_voxel_m=float(d.get("finest_voxel_m", 0.1)),
            field_only_mode=bool(d.get("field_only_mode", False)),
        )


def snap_to_lattice(p, voxel_size: float) -> np.ndarray:
    return np.round(np.asarray(p, dtype=np.float64) / voxel_size) * voxel_size


@dataclass
class Cascade:
    """One distance grid level. The center is snapped to this cascade's own
    voxel lattice (``center_index`` holds its integer lattice coordinates)
    so rolls shift whole cells and revoxelize bit-identically."""

    center: np.ndarray
    center_index: np.ndarray   # (3,) int64, center on the global lattice
    resolution: int
    voxel_size: float
    occupancy: OccupancyGrid
    distance: np.ndarray       # (R, R, R) float64, +inf sentinel
    nearest_seed: np.ndarray   # (R, R, R, 3) float64 world positions

    @property
    def origin(self) -> np.ndarray:
        return self.occupancy.origin

    @property
    def extent(self) -> float:
        return self.resolution * self.voxel_size


def _build_cascade(mesh, center_hint, resolution: int, voxel_size: float) -> Cascade:
    m = np.round(np.asarray(center_hint, dtype=np.float64) / voxel_size).astype(np.int64)
    occ = voxelize_lattice(mesh, m - resolution // 2, resolution, voxel_size)
    return _finish_cascade(m, resolution, voxel_size, occ)


def _finish_cascade(center_index, resolution, voxel_size, occ) -> Cascade:
    nearest, dist = jump_flood(occ)
    dist = fast_sweep(dist, voxel_size)
    return Cascade(center=center_index * voxel_size, center_index=center_index,
                   resolution=resolution, voxel_size=voxel_size,
                   occupancy=occ, distance=dist, nearest_seed=nearest)


class CascadedDistanceField:
    """Ordered stack of cascades, finest first, voxel size doubling per
    level. All cascades share one cubic resolution."""

    def __init__(self, cascades: list[Cascade], config: FieldConfig):
        self.cascades = cascades
        self.config = config
        self._packed = None

    @property
    def finest_voxel(self) -> float:
        return self.cascades[0].voxel_size

    @property
    def coarsest_voxel(self) -> float:
        return self.cascades[-1].voxel_size

    @property
    def resolution(self) -> int:
        return self.cascades[0].resolution

    def packed(self):
        """Kernel-ready snapshot: (distance stack, origins, voxel sizes)."""
        if self._packed is None:
            dist = np.ascontiguousarray(np.stack([c.distance for c in self.cascades]))
            origins = np.ascontiguousarray(np.stack([c.origin for c in self.cascades]))
            voxels = np.ascontiguousarray(
                np.array([c.voxel_size for c in self.cascades], dtype=np.float64))
            self._packed = (dist, origins, voxels)
        return self._packed

    def invalidate(self):
        self._packed = None

    def save(self, out_dir) -> None:
        """Debug dump: per-cascade raw float64 volume plus JSON header."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for k, c in enumerate(self.cascades):
            header = {
                "resolution": c.resolution,
                "voxel_size": c.voxel_size,
                "center": c.center.tolist(),
                "origin": c.origin.tolist(),
            }
            (out_dir / f"cascade_{k}.json").write_text(json.dumps(header, indent=2) + "\n")
            (out_dir / f"cascade_{k}.f64").write_bytes(c.distance.tobytes())


def build_cascades(mesh, camera_position, config: FieldConfig | None = None) -> CascadedDistanceField:
    """Build the full cascade stack centered on the camera position.

    Per cascade: voxelize -> jump flooding -> seed distances -> fast sweep.
    """
    config = config or FieldConfig()
    res = config.cascade_resolution
    cascades = []
    for k in range(config.cascade_count):
        h = config.effective_finest_voxel * (2.0 ** k)
        cascades.append(_build_cascade(mesh, camera_position, res, h))
    return CascadedDistanceField(cascades, config)


def roll_update(field_: CascadedDistanceField, new_camera_position, mesh) -> CascadedDistanceField:
    """Shift cascades toward a new camera position by whole voxels.

    Occupancy is shifted and only the newly exposed slabs are re-voxelized;
    distances are then recomputed from the (identical to from-scratch)
    occupancy. Raises DisplacementTooLargeError when any cascade would jump
    more than one of its own voxels on some axis; chunk larger moves.
    """
    new_pos = np.asarray(new_camera_position, dtype=np.float64)
    deltas = []
    for c in field_.cascades:
        new_index = np.round(new_pos / c.voxel_size).astype(np.int64)
        d = new_index - c.center_index
        if np.any(np.abs(d) > 1):
            raise DisplacementTooLargeError(
                f"cascade with voxel {c.voxel_size} would shift {d} cells; "
                "chunk the move into single-voxel steps")
        deltas.append((new_index, d))

    changed = False
    for c, (new_index, d) in zip(field_.cascades, deltas):
        if not np.any(d):
            continue
        changed = True
        res = c.resolution
        shifted = np.zeros_like(c.occupancy.bits)
        src = [slice(None)] * 3
        dst = [slice(None)] * 3
        for ax in range(3):
            s = int(d[ax])
            if s > 0:
                src[ax] = slice(s, res)
                dst[ax] = slice(0, res - s)
            elif s < 0:
                src[ax] = slice(0, res + s)
                dst[ax] = slice(-s, res)
        shifted[tuple(dst)] = c.occupancy.bits[tuple(src)]
        base = new_index - res // 2
        occ = OccupancyGrid(res, base * c.voxel_size, c.voxel_size, shifted,
                            lattice_base=base)
        # re-voxelize only the slabs that entered the window
        for ax in range(3):
            s = int(d[ax])
            if s == 0:
                continue
            lo = [0, 0, 0]
            hi = [res - 1] * 3
            if s > 0:
                lo[ax] = res - s
            else:
                hi[ax] = -s - 1
            occ.bits[lo[0]:hi[0] + 1, lo[1]:hi[1] + 1, lo[2]:hi[2] + 1] = 0
            voxelize_into(mesh, occ, lo, hi)
        refreshed = _finish_cascade(new_index, res, c.voxel_size, occ)
        c.center = refreshed.center
        c.center_index = refreshed.center_index
        c.occupancy = refreshed.occupancy
        c.distance = refreshed.distance
        c.nearest_seed = refreshed.nearest_seed
    if changed:
        field_.invalidate()
    return field_


# ---------------------------------------------------------------------------
# sampling kernels
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True, inline="always")
def _select_cascade(origins, voxels, res, px, py, pz):
    """Finest cascade whose safe interior (extent shrunk by one voxel per
    face) contains the point; -1 when outside all cascades."""
    for c in range(voxels.shape[0]):
        h = voxels[c]
        lo = h
        hi = (res - 1) * h
        x = px - origins[c, 0]
        if x < lo or x > hi:
            continue
        y = py - origins[c, 1]
        if y < lo or y > hi:
            continue
        z = pz - origins[c, 2]
        if z < lo or z > hi:
            continue
        return c
    return -1


@njit(cache=True, nogil=True, inline="always")
def _trilerp(dist, c, origins, voxels, res, px, py, pz):
    h = voxels[c]
    x = (px - origins[c, 0]) / h - 0.5
    y = (py - origins[c, 1]) / h - 0.5
    z = (pz - origins[c, 2]) / h - 0.5
    i = int(np.floor(x))
    j = int(np.floor(y))
    k = int(np.floor(z))
    if i < 0:
        i = 0
    elif i > res - 2:
        i = res - 2
    if j < 0:
        j = 0
    elif j > res - 2:
        j = res - 2
    if k < 0:
        k = 0
    elif k > res - 2:
        k = res - 2
    fx = x - i
    fy = y - j
    fz = z - k
    v000 = dist[c, i, j, k]
    if v000 == np.inf:
        return np.inf
    v100 = dist[c, i + 1, j, k]
    v010 = dist[c, i, j + 1, k]
    v110 = dist[c, i + 1, j + 1, k]
    v001 = dist[c, i, j, k + 1]
    v101 = dist[c, i + 1, j, k + 1]
    v011 = dist[c, i, j + 1, k + 1]
    v111 = dist[c, i + 1, j + 1, k + 1]
    c00 = v000 + (v100 - v000) * fx
    c10 = v010 + (v110 - v010) * fx
    c01 = v001 + (v101 - v001) * fx
    c11 = v011 + (v111 - v011) * fx
    c0 = c00 + (c10 - c00) * fy
    c1 = c01 + (c11 - c01) * fy
    return c0 + (c1 - c0) * fz


@njit(cache=True, nogil=True, inline="always")
def field_sample(dist, origins, voxels, res, px, py, pz):
    """Sample the field at a point: (distance, active voxel size, cascade).

    An empty cascade (all +inf) knows nothing about the scene, so the
    sample falls through to the next coarser cascade that has seeds;
    stepping by +inf there would skip geometry the coarse levels can see.
    Outside all cascades the value is the distance to the coarsest safe box
    plus the trilinear value at the clamped entry point (cascade -1).
    """
    c = _select_cascade(origins, voxels, res, px, py, pz)
    if c >= 0:
        for cc in range(c, voxels.shape[0]):
            h = voxels[cc]
            x = px - origins[cc, 0]
            y = py - origins[cc, 1]
            z = pz - origins[cc, 2]
            if (x < h or x > (res - 1) * h or y < h or y > (res - 1) * h
                    or z < h or z > (res - 1) * h):
                continue
            v = _trilerp(dist, cc, origins, voxels, res, px, py, pz)
            if v < np.inf:
                return v, h, cc
        return np.inf, voxels[c], c
    cc = voxels.shape[0] - 1
    h = voxels[cc]
    lo0 = origins[cc, 0] + h
    lo1 = origins[cc, 1] + h
    lo2 = origins[cc, 2] + h
    hi0 = origins[cc, 0] + (res - 1) * h
    hi1 = origins[cc, 1] + (res - 1) * h
    hi2 = origins[cc, 2] + (res - 1) * h
    qx = min(max(px, lo0), hi0)
    qy = min(max(py, lo1), hi1)
    qz = min(max(pz, lo2), hi2)
    dx = px - qx
    dy = py - qy
    dz = pz - qz
    dbox = math.sqrt(dx * dx + dy * dy + dz * dz)
    base = _trilerp(dist, cc, origins, voxels, res, qx, qy, qz)
    if base == np.inf:
        return np.inf, h, -1
    return dbox + base, h, -1


@njit(cache=True, nogil=True, inline="always")
def field_voxel_size_at(origins, voxels, res, px, py, pz):
    """Voxel size of the cascade containing the point (coarsest outside)."""
    c = _select_cascade(origins, voxels, res, px, py, pz)
    if c >= 0:
        return voxels[c]
    return voxels[voxels.shape[0] - 1]


@njit(cache=True, nogil=True)
def field_gradient(dist, origins, voxels, res, px, py, pz):
    """Central-difference gradient, normalized; +y fallback when flat."""
    c = _select_cascade(origins, voxels, res, px, py, pz)
    h = voxels[c] if c >= 0 else voxels[voxels.shape[0] - 1]
    s = 0.5 * h
    gx = (field_sample(dist, origins, voxels, res, px + s, py, pz)[0]
          - field_sample(dist, origins, voxels, res, px - s, py, pz)[0])
    gy = (field_sample(dist, origins, voxels, res, px, py + s, pz)[0]
          - field_sample(dist, origins, voxels, res, px, py - s, pz)[0])
    gz = (field_sample(dist, origins, voxels, res, px, py, pz + s)[0]
          - field_sample(dist, origins, voxels, res, px, py, pz - s)[0])
    n2 = gx * gx + gy * gy + gz * gz
    if not (n2 > 1e-40) or not np.isfinite(n2):
        return 0.0, 1.0, 0.0
    inv = 1.0 / math.sqrt(n2)
    return gx * inv, gy * inv, gz * inv


# ---------------------------------------------------------------------------
# python-level sampling API
# ---------------------------------------------------------------------------

def sample(field_: CascadedDistanceField, point) -> tuple[float, float]:
    """Distance and the voxel size of the cascade that produced it."""
    p = np.asarray(point, dtype=np.float64)
    dist, origins, voxels = field_.packed()
    d, h, _ = field_sample(dist, origins, voxels, field_.resolution, p[0], p[1], p[2])
    return float(d), float(h)


def cascade_index_at(field_: CascadedDistanceField, point) -> int:
    """Index of the cascade sample() would use; -1 outside all cascades."""
    p = np.asarray(point, dtype=np.float64)
    _, origins, voxels = field_.packed()
    return int(_select_cascade(origins, voxels, field_.resolution, p[0], p[1], p[2]))


def voxel_size_at(field_: CascadedDistanceField, point) -> float:
    p = np.asarray(point, dtype=np.float64)
    _, origins, voxels = field_.packed()
    return float(field_voxel_size_at(origins, voxels, field_.resolution, p[0], p[1], p[2]))


def gradient(field_: CascadedDistanceField, point) -> np.ndarray:
    p = np.asarray(point, dtype=np.float64)
    dist, origins, voxels = field_.packed()
    g = field_gradient(dist, origins, voxels, field_.resolution, p[0], p[1], p[2])
    return np.array(g)
