"""Independent oracles and small scene builders shared by the tests.

Everything here is deliberately written against the math definitions, not
the package kernels, so both sides of each dual-route check stay separate.
"""

import numpy as np
from numba import njit

from splitray.scene import Scene, TriangleMesh


# ---------------------------------------------------------------------------
# brute-force triangle intersection (vectorized Moller-Trumbore over all
# triangles; the BVH path is checked against this)
# ---------------------------------------------------------------------------

def brute_force_closest(tri_verts, origin, direction, t_min, t_max):
    """Closest hit over every triangle, interval-clipped; returns t or inf."""
    v0 = tri_verts[:, 0]
    e1 = tri_verts[:, 1] - v0
    e2 = tri_verts[:, 2] - v0
    d = np.asarray(direction, float)
    o = np.asarray(origin, float)
    p = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, p)
    ok = np.abs(det) > 1e-9
    inv = np.where(ok, 1.0 / np.where(det == 0, 1.0, det), 0.0)
    tvec = o - v0
    u = np.einsum("ij,ij->i", tvec, p) * inv
    q = np.cross(tvec, e1)
    v = np.einsum("ij,j->i", q, d) * inv
    t = np.einsum("ij,ij->i", e2, q) * inv
    ok &= (u >= 0) & (u <= 1) & (v >= 0) & (u + v <= 1) & (t >= t_min) & (t <= t_max)
    return t[ok].min() if ok.any() else np.inf


def brute_force_closest_batch(tri_verts, origins, dirs, t0s, t1s):
    return np.array([
        brute_force_closest(tri_verts, origins[i], dirs[i], t0s[i], t1s[i])
        for i in range(len(origins))
    ])


@njit(cache=True)
def oracle_closest_batch(tv, origins, dirs, t0s, t1s, out_t):
    """Exhaustive all-triangle closest hit (no acceleration structure), for
    the large acceptance corpus. Same intersection contract (determinant
    cutoff 1e-9, closed interval), written independently of the BVH path."""
    for i in range(origins.shape[0]):
        ox, oy, oz = origins[i, 0], origins[i, 1], origins[i, 2]
        dx, dy, dz = dirs[i, 0], dirs[i, 1], dirs[i, 2]
        lo, hi = t0s[i], t1s[i]
        best = np.inf
        for j in range(tv.shape[0]):
            ax, ay, az = tv[j, 0, 0], tv[j, 0, 1], tv[j, 0, 2]
            e1x = tv[j, 1, 0] - ax
            e1y = tv[j, 1, 1] - ay
            e1z = tv[j, 1, 2] - az
            e2x = tv[j, 2, 0] - ax
            e2y = tv[j, 2, 1] - ay
            e2z = tv[j, 2, 2] - az
            px = dy * e2z - dz * e2y
            py = dz * e2x - dx * e2z
            pz = dx * e2y - dy * e2x
            det = e1x * px + e1y * py + e1z * pz
            if -1e-9 < det < 1e-9:
                continue
            inv = 1.0 / det
            sx, sy, sz = ox - ax, oy - ay, oz - az
            u = (sx * px + sy * py + sz * pz) * inv
            if u < 0.0 or u > 1.0:
                continue
            qx = sy * e1z - sz * e1y
            qy = sz * e1x - sx * e1z
            qz = sx * e1y - sy * e1x
            v = (dx * qx + dy * qy + dz * qz) * inv
            if v < 0.0 or u + v > 1.0:
                continue
            t = (e2x * qx + e2y * qy + e2z * qz) * inv
            if lo <= t <= hi and t < best:
                best = t
        out_t[i] = best


# ---------------------------------------------------------------------------
# plane-then-inside ray/triangle oracle (different formulation from MT)
# ---------------------------------------------------------------------------

def plane_inside_oracle(origin, direction, tri):
    """Intersect the triangle plane, then test half-spaces; t or None."""
    o = np.asarray(origin, float)
    d = np.asarray(direction, float)
    a, b, c = (np.asarray(v, float) for v in tri)
    n = np.cross(b - a, c - a)
    denom = float(np.dot(n, d))
    if abs(denom) < 1e-12:
        return None
    t = float(np.dot(n, a - o)) / denom
    if t <= 0:
        return None
    p = o + t * d
    for u, v in ((a, b), (b, c), (c, a)):
        edge_n = np.cross(n, v - u)
        if np.dot(p - u, edge_n) < -1e-9 * max(1.0, np.linalg.norm(edge_n)):
            return None
    return t


# ---------------------------------------------------------------------------
# grids and distance oracles
# ---------------------------------------------------------------------------

def brute_force_seed_distance(bits, voxel_size):
    """Euclidean distance from each cell center to the nearest occupied
    cell center, by exhaustive comparison."""
    res = bits.shape[0]
    idx = np.argwhere(bits > 0)
    coords = np.stack(np.meshgrid(*[np.arange(res)] * 3, indexing="ij"), axis=-1)
    if len(idx) == 0:
        return np.full((res, res, res), np.inf)
    diffs = coords[:, :, :, None, :] - idx[None, None, None, :, :]
    d2 = (diffs.astype(float) ** 2).sum(axis=-1)
    return np.sqrt(d2.min(axis=-1)) * voxel_size


def sample_triangle_points(tri, n, rng):
    """n uniform points on a triangle."""
    u = rng.random(n)
    v = rng.random(n)
    flip = u + v > 1
    u[flip] = 1 - u[flip]
    v[flip] = 1 - v[flip]
    a, b, c = tri
    return a[None, :] + u[:, None] * (b - a)[None, :] + v[:, None] * (c - a)[None, :]


# ---------------------------------------------------------------------------
# scene builders
# ---------------------------------------------------------------------------

def wall_mesh(z, half=5.0, albedo=(0.7, 0.7, 0.7)):
    verts = np.array([[-half, -half, z], [half, -half, z],
                      [half, half, z], [-half, half, z]])
    return TriangleMesh(verts, np.array([[0, 1, 2], [0, 2, 3]]), albedo=np.asarray(albedo))


def two_wall_scene(z1=1.0, z2=2.0):
    return Scene(meshes=[wall_mesh(z1), wall_mesh(z2)])


def random_soup(n, rng, extent=4.0, edge=0.5):
    centers = rng.uniform(-extent, extent, (n, 3))
    tri = centers[:, None, :] + rng.normal(0, edge, (n, 3, 3))
    verts = tri.reshape(-1, 3)
    return TriangleMesh(verts, np.arange(len(verts)).reshape(-1, 3))


def random_unit_dirs(n, rng):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def closed_box_scene(side=0.4, center=(0.0, 0.0, 0.0)):
    """Inward-facing closed box around the given center."""
    c = np.asarray(center, float)
    h = side / 2
    lo = c - h
    hi = c + h
    v = np.array([
        [lo[0], lo[1], lo[2]], [hi[0], lo[1], lo[2]],
        [hi[0], lo[1], hi[2]], [lo[0], lo[1], hi[2]],
        [lo[0], hi[1], lo[2]], [hi[0], hi[1], lo[2]],
        [hi[0], hi[1], hi[2]], [lo[0], hi[1], hi[2]],
    ])
    f = np.array([
        (0, 1, 2), (0, 2, 3), (4, 6, 5), (4, 7, 6),
        (0, 4, 5), (0, 5, 1), (3, 2, 6), (3, 6, 7),
        (0, 3, 7), (0, 7, 4), (1, 5, 6), (1, 6, 2),
    ])
    return Scene(meshes=[TriangleMesh(v, f)])
