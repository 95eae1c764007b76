"""Conservative surface voxelization via per-cell separating-axis tests.

A cell is occupied exactly when its closed box overlaps at least one
triangle, which makes the result a superset of the true surface (the
source of the "blobbing" the combined tracer works around).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .geom import Aabb


@dataclass
class OccupancyGrid:
    """Cubic grid of occupancy flags; cell (i,j,k) spans
    ``origin + (i,j,k)*voxel_size`` to ``origin + (i+1,j+1,k+1)*voxel_size``.

    ``lattice_base`` (optional, integer cell coordinates of the origin on
    the global voxel lattice) makes cell-center arithmetic independent of
    the window position, so a rolled window voxelizes bit-identically to a
    rebuilt one."""

    resolution: int
    origin: np.ndarray
    voxel_size: float
    bits: np.ndarray  # (R, R, R) uint8
    lattice_base: np.ndarray | None = None

    def __post_init__(self):
        if self.resolution < 2:
            raise ValueError("resolution must be >= 2")
        if self.voxel_size <= 0:
            raise ValueError("voxel_size must be positive")
        self.origin = np.asarray(self.origin, dtype=np.float64)
        if self.lattice_base is not None:
            self.lattice_base = np.asarray(self.lattice_base, dtype=np.int64)

    @property
    def occupied_count(self) -> int:
        return int(np.count_nonzero(self.bits))

    def cell_centers(self) -> np.ndarray:
        """Centers of all cells, shape (R, R, R, 3)."""
        r = self.resolution
        ax = self.origin[None, :] + (np.arange(r)[:, None] + 0.5) * self.voxel_size
        out = np.empty((r, r, r, 3))
        out[..., 0] = ax[:, 0][:, None, None]
        out[..., 1] = ax[:, 1][None, :, None]
        out[..., 2] = ax[:, 2][None, None, :]
        return out

    def save(self, prefix) -> None:
        """Debug dump: raw packed bits plus a small JSON header."""
        prefix = Path(prefix)
        header = {
            "resolution": self.resolution,
            "origin": self.origin.tolist(),
            "voxel_size": self.voxel_size,
        }
        prefix.with_suffix(".json").write_text(json.dumps(header, indent=2) + "\n")
        prefix.with_suffix(".bits").write_bytes(np.packbits(self.bits.ravel()).tobytes())

    @classmethod
    def load(cls, prefix) -> "OccupancyGrid":
        prefix = Path(prefix)
        header = json.loads(prefix.with_suffix(".json").read_text())
        r = header["resolution"]
        raw = np.frombuffer(prefix.with_suffix(".bits").read_bytes(), dtype=np.uint8)
        bits = np.unpackbits(raw)[: r * r * r].reshape(r, r, r).astype(np.uint8)
        return cls(r, np.asarray(header["origin"]), header["voxel_size"], bits)


@njit(cache=True, nogil=True, inline="always")
def _axis_separates(p0, p1, p2, r):
    lo = min(p0, min(p1, p2))
    hi = max(p0, max(p1, p2))
    return lo > r or hi < -r


@njit(cache=True, nogil=True)
def _tri_box_overlap(v0, v1, v2, cx, cy, cz, hx, hy, hz):
    """Separating-axis triangle/box test over the 13 canonical axes.

    Closed-box semantics: touching counts as overlap.
    """
    # triangle in box-centered coordinates
    ax0 = v0[0] - cx; ay0 = v0[1] - cy; az0 = v0[2] - cz
    ax1 = v1[0] - cx; ay1 = v1[1] - cy; az1 = v1[2] - cz
    ax2 = v2[0] - cx; ay2 = v2[1] - cy; az2 = v2[2] - cz

    # box face normals = AABB overlap
    if _axis_separates(ax0, ax1, ax2, hx):
        return False
    if _axis_separates(ay0, ay1, ay2, hy):
        return False
    if _axis_separates(az0, az1, az2, hz):
        return False

    e0x = ax1 - ax0; e0y = ay1 - ay0; e0z = az1 - az0
    e1x = ax2 - ax1; e1y = ay2 - ay1; e1z = az2 - az1
    e2x = ax0 - ax2; e2y = ay0 - ay2; e2z = az0 - az2

    # 9 edge x box-axis cross products
    for i in range(3):
        if i == 0:
            ex, ey, ez = e0x, e0y, e0z
        elif i == 1:
            ex, ey, ez = e1x, e1y, e1z
        else:
            ex, ey, ez = e2x, e2y, e2z
        # cross(e, x-axis) = (0, ez, -ey)
        r = hy * abs(ez) + hz * abs(ey)
        if _axis_separates(ay0 * ez - az0 * ey, ay1 * ez - az1 * ey, ay2 * ez - az2 * ey, r):
            return False
        # cross(e, y-axis) = (-ez, 0, ex)
        r = hx * abs(ez) + hz * abs(ex)
        if _axis_separates(az0 * ex - ax0 * ez, az1 * ex - ax1 * ez, az2 * ex - ax2 * ez, r):
            return False
        # cross(e, z-axis) = (ey, -ex, 0)
        r = hx * abs(ey) + hy * abs(ex)
        if _axis_separates(ax0 * ey - ay0 * ex, ax1 * ey - ay1 * ex, ax2 * ey - ay2 * ex, r):
            return False

    # triangle plane normal
    nx = e0y * e1z - e0z * e1y
    ny = e0z * e1x - e0x * e1z
    nz = e0x * e1y - e0y * e1x
    r = hx * abs(nx) + hy * abs(ny) + hz * abs(nz)
    p = nx * ax0 + ny * ay0 + nz * az0
    if p > r or p < -r:
        return False
    return True


@njit(cache=True, nogil=True)
def _voxelize_range(tv0, tv1, tv2, ox, oy, oz, h, res, bits,
                    lo0, lo1, lo2, hi0, hi1, hi2,
                    use_lattice, gx, gy, gz):
    """Set bits for cells in [lo, hi] (inclusive) overlapped by any triangle.

    With use_lattice, cell centers come from global integer coordinates
    ``(g + i + 0.5) * h`` so the result is window-position independent."""
    half = 0.5 * h
    for t in range(tv0.shape[0]):
        bmin0 = min(tv0[t, 0], min(tv1[t, 0], tv2[t, 0]))
        bmin1 = min(tv0[t, 1], min(tv1[t, 1], tv2[t, 1]))
        bmin2 = min(tv0[t, 2], min(tv1[t, 2], tv2[t, 2]))
        bmax0 = max(tv0[t, 0], max(tv1[t, 0], tv2[t, 0]))
        bmax1 = max(tv0[t, 1], max(tv1[t, 1], tv2[t, 1]))
        bmax2 = max(tv0[t, 2], max(tv1[t, 2], tv2[t, 2]))
        # one-cell margin so closed boxes touching the triangle AABB exactly
        # on a lattice plane are still tested; the SAT filters precisely
        i0 = max(lo0, int(np.floor((bmin0 - ox) / h)) - 1)
        j0 = max(lo1, int(np.floor((bmin1 - oy) / h)) - 1)
        k0 = max(lo2, int(np.floor((bmin2 - oz) / h)) - 1)
        i1 = min(hi0, int(np.floor((bmax0 - ox) / h)) + 1)
        j1 = min(hi1, int(np.floor((bmax1 - oy) / h)) + 1)
        k1 = min(hi2, int(np.floor((bmax2 - oz) / h)) + 1)
        if i0 > i1 or j0 > j1 or k0 > k1:
            continue
        for i in range(i0, i1 + 1):
            cx = (gx + i + 0.5) * h if use_lattice else ox + (i + 0.5) * h
            for j in range(j0, j1 + 1):
                cy = (gy + j + 0.5) * h if use_lattice else oy + (j + 0.5) * h
                for k in range(k0, k1 + 1):
                    if bits[i, j, k]:
                        continue
                    cz = (gz + k + 0.5) * h if use_lattice else oz + (k + 0.5) * h
                    if _tri_box_overlap(tv0[t], tv1[t], tv2[t], cx, cy, cz, half, half, half):
                        bits[i, j, k] = 1


def triangle_box_overlap(triangle, box: Aabb) -> bool:
    """True iff the triangle intersects the closed box."""
    if np.any(box.extent <= 0):
        raise ValueError("box must have positive extent")
    tri = np.asarray(triangle, dtype=np.float64)
    c = 0.5 * (box.min + box.max)
    h = 0.5 * box.extent
    return bool(_tri_box_overlap(tri[0], tri[1], tri[2],
                                 c[0], c[1], c[2], h[0], h[1], h[2]))


def _triangle_arrays(source):
    if hasattr(source, "triangle_vertices"):
        tv = source.triangle_vertices()
    elif hasattr(source, "vertices") and hasattr(source, "indices"):
        tv = source.vertices[source.indices]
    else:
        tv = np.asarray(source, dtype=np.float64)
    tv = np.ascontiguousarray(tv, dtype=np.float64)
    return (np.ascontiguousarray(tv[:, 0]),
            np.ascontiguousarray(tv[:, 1]),
            np.ascontiguousarray(tv[:, 2]))


def _lattice_args(grid: OccupancyGrid):
    if grid.lattice_base is None:
        return False, 0, 0, 0
    b = grid.lattice_base
    return True, int(b[0]), int(b[1]), int(b[2])


def voxelize(mesh, origin, resolution: int, voxel_size: float,
             lattice_base=None) -> OccupancyGrid:
    """Surface-voxelize a mesh into a fresh occupancy grid.

    Exactly the cells whose closed box overlaps at least one triangle are
    set; an empty mesh yields an empty grid.
    """
    origin = np.asarray(origin, dtype=np.float64)
    grid = OccupancyGrid(resolution, origin, float(voxel_size),
                         np.zeros((resolution, resolution, resolution), dtype=np.uint8),
                         lattice_base=lattice_base)
    tv0, tv1, tv2 = _triangle_arrays(mesh)
    if len(tv0):
        r = resolution - 1
        _voxelize_range(tv0, tv1, tv2, origin[0], origin[1], origin[2],
                        grid.voxel_size, resolution, grid.bits, 0, 0, 0, r, r, r,
                        *_lattice_args(grid))
    return grid


def voxelize_lattice(mesh, lattice_base, resolution: int, voxel_size: float) -> OccupancyGrid:
    """Voxelize a window of the global voxel lattice; the origin is
    ``lattice_base * voxel_size``."""
    base = np.asarray(lattice_base, dtype=np.int64)
    return voxelize(mesh, base * voxel_size, resolution, voxel_size,
                    lattice_base=base)


def voxelize_into(mesh, grid: OccupancyGrid, cell_lo, cell_hi) -> None:
    """Voxelize only cells within [cell_lo, cell_hi] (inclusive) of an
    existing grid; used by the rolling cascade update."""
    tv0, tv1, tv2 = _triangle_arrays(mesh)
    if len(tv0) == 0:
        return
    lo = np.maximum(np.asarray(cell_lo, dtype=np.int64), 0)
    hi = np.minimum(np.asarray(cell_hi, dtype=np.int64), grid.resolution - 1)
    if np.any(lo > hi):
        return
    _voxelize_range(tv0, tv1, tv2,
                    grid.origin[0], grid.origin[1], grid.origin[2],
                    grid.voxel_size, grid.resolution, grid.bits,
                    lo[0], lo[1], lo[2], hi[0], hi[1], hi[2],
                    *_lattice_args(grid))
