"""Exact triangle tracing over a t-interval through a binned-SAH BVH.

This module plays the hardware-ray-tracing role: it is the precise (and
expensive) side of the combined tracer. All traversal work is counted so
runs can be compared by portable work counters instead of wall time.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import EmptyMeshError
from .stats import WorkStats

DET_EPSILON = 1e-9
LEAF_SIZE = 4
SAH_BINS = 8
STACK_DEPTH = 128


class TracerKind(enum.Enum):
    EXACT = "exact"
    FIELD = "field"


@dataclass
class HitResult:
    """Intersection record; ``t`` is the distance along the unit-ray."""

    t: float
    point: np.ndarray
    normal: np.ndarray
    source: TracerKind
    primitive: int | None = None


@dataclass
class Bvh:
    """Flat binary BVH. Internal node children live at ``a`` and ``a + 1``;
    leaves own the primitive range ``[a, a + n)`` in BVH order."""

    node_min: np.ndarray   # (N, 3)
    node_max: np.ndarray   # (N, 3)
    node_a: np.ndarray     # (N,) int32
    node_n: np.ndarray     # (N,) int32; 0 = internal
    pv0: np.ndarray        # (T, 3) triangle vertices in BVH order
    pv1: np.ndarray
    pv2: np.ndarray
    prim_id: np.ndarray    # (T,) int64, original triangle indices

    @property
    def triangle_count(self) -> int:
        return len(self.prim_id)

    @property
    def node_count(self) -> int:
        return len(self.node_a)

    def arrays(self):
        return (self.node_min, self.node_max, self.node_a, self.node_n,
                self.pv0, self.pv1, self.pv2)

    def new_stack(self):
        return np.empty(STACK_DEPTH, dtype=np.int32), np.empty(STACK_DEPTH, dtype=np.float64)


def _triangle_array(source) -> np.ndarray:
    if hasattr(source, "triangle_vertices"):
        return source.triangle_vertices()
    if hasattr(source, "vertices") and hasattr(source, "indices"):
        return source.vertices[source.indices]
    return np.asarray(source, dtype=np.float64)


def build_bvh(source) -> Bvh:
    """Build a binned-SAH BVH (8 bins per axis, leaves of up to 4 triangles).

    Construction is deterministic for a fixed input. ``source`` may be a
    TriangleMesh, a Scene, or a raw (T, 3, 3) vertex array.
    """
    tv = _triangle_array(source)
    n_tri = len(tv)
    if n_tri == 0:
        raise EmptyMeshError("cannot build a BVH over zero triangles")
    tv = np.ascontiguousarray(tv, dtype=np.float64)
    tri_lo = tv.min(axis=1)
    tri_hi = tv.max(axis=1)
    cent = 0.5 * (tri_lo + tri_hi)

    order = np.arange(n_tri, dtype=np.int64)
    node_min: list[np.ndarray] = []
    node_max: list[np.ndarray] = []
    node_a: list[int] = []
    node_n: list[int] = []

    def alloc() -> int:
        node_min.append(np.zeros(3))
        node_max.append(np.zeros(3))
        node_a.append(0)
        node_n.append(0)
        return len(node_a) - 1

    root = alloc()
    stack = [(root, 0, n_tri)]
    while stack:
        ni, s, e = stack.pop()
        idx = order[s:e]
        node_min[ni] = tri_lo[idx].min(axis=0)
        node_max[ni] = tri_hi[idx].max(axis=0)
        count = e - s
        if count <= LEAF_SIZE:
            node_a[ni] = s
            node_n[ni] = count
            continue
        mid = _sah_partition(order, s, e, cent, tri_lo, tri_hi)
        left = alloc()
        right = alloc()
        assert right == left + 1
        node_a[ni] = left
        node_n[ni] = 0
        # LIFO: process left first for a depth-first, deterministic layout
        stack.append((right, mid, e))
        stack.append((left, s, mid))

    return Bvh(
        node_min=np.ascontiguousarray(node_min, dtype=np.float64),
        node_max=np.ascontiguousarray(node_max, dtype=np.float64),
        node_a=np.asarray(node_a, dtype=np.int32),
        node_n=np.asarray(node_n, dtype=np.int32),
        pv0=np.ascontiguousarray(tv[order, 0]),
        pv1=np.ascontiguousarray(tv[order, 1]),
        pv2=np.ascontiguousarray(tv[order, 2]),
        prim_id=order.copy(),
    )


def _surface_area(lo, hi):
    ext = np.maximum(hi - lo, 0.0)
    return 2.0 * (ext[0] * ext[1] + ext[1] * ext[2] + ext[2] * ext[0])


def _sah_partition(order, s, e, cent, tri_lo, tri_hi) -> int:
    """Reorder order[s:e] around the best binned-SAH split; returns mid."""
    idx = order[s:e]
    c = cent[idx]
    cb_lo = c.min(axis=0)
    cb_hi = c.max(axis=0)
    ext = cb_hi - cb_lo

    best_cost = np.inf
    best_axis = -1
    best_split = -1
    best_bins = None
    for axis in range(3):
        if ext[axis] <= 0.0:
            continue
        bins = np.minimum(
            ((c[:, axis] - cb_lo[axis]) / ext[axis] * SAH_BINS).astype(np.int64),
            SAH_BINS - 1,
        )
        counts = np.bincount(bins, minlength=SAH_BINS)
        blo = np.full((SAH_BINS, 3), np.inf)
        bhi = np.full((SAH_BINS, 3), -np.inf)
        for k in range(SAH_BINS):
            m = bins == k
            if counts[k]:
                blo[k] = tri_lo[idx[m]].min(axis=0)
                bhi[k] = tri_hi[idx[m]].max(axis=0)
        # sweep split planes between bins i and i+1
        lo_acc = np.full(3, np.inf)
        hi_acc = np.full(3, -np.inf)
        left_area = np.zeros(SAH_BINS)
        left_count = np.zeros(SAH_BINS, dtype=np.int64)
        nl = 0
        for k in range(SAH_BINS - 1):
            if counts[k]:
                lo_acc = np.minimum(lo_acc, blo[k])
                hi_acc = np.maximum(hi_acc, bhi[k])
            nl += counts[k]
            left_count[k] = nl
            left_area[k] = _surface_area(lo_acc, hi_acc) if nl else 0.0
        lo_acc = np.full(3, np.inf)
        hi_acc = np.full(3, -np.inf)
        nr = 0
        for k in range(SAH_BINS - 1, 0, -1):
            if counts[k]:
                lo_acc = np.minimum(lo_acc, blo[k])
                hi_acc = np.maximum(hi_acc, bhi[k])
            nr += counts[k]
            if left_count[k - 1] == 0 or nr == 0:
                continue
            cost = left_area[k - 1] * left_count[k - 1] + _surface_area(lo_acc, hi_acc) * nr
            if cost < best_cost:
                best_cost = cost
                best_axis = axis
                best_split = k - 1
                best_bins = bins

    if best_axis < 0:
        # all centroids identical: median split keeps progress deterministic
        return s + (e - s) // 2
    mask = best_bins <= best_split
    left = idx[mask]
    right = idx[~mask]
    if len(left) == 0 or len(right) == 0:
        return s + (e - s) // 2
    order[s:s + len(left)] = left
    order[s + len(left):e] = right
    return s + len(left)


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True, inline="always")
def _mt(v0, v1, v2, ox, oy, oz, dx, dy, dz):
    """Moller-Trumbore; returns (hit, t, u, v). det cutoff 1e-9."""
    e1x = v1[0] - v0[0]; e1y = v1[1] - v0[1]; e1z = v1[2] - v0[2]
    e2x = v2[0] - v0[0]; e2y = v2[1] - v0[1]; e2z = v2[2] - v0[2]
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if -DET_EPSILON < det < DET_EPSILON:
        return False, 0.0, 0.0, 0.0
    inv = 1.0 / det
    tx = ox - v0[0]; ty = oy - v0[1]; tz = oz - v0[2]
    u = (tx * px + ty * py + tz * pz) * inv
    if u < 0.0 or u > 1.0:
        return False, 0.0, 0.0, 0.0
    qx = ty * e1z - tz * e1y
    qy = tz * e1x - tx * e1z
    qz = tx * e1y - ty * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return False, 0.0, 0.0, 0.0
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    return True, t, u, v


@njit(cache=True, nogil=True, inline="always")
def _slab(node_min, node_max, ni, ox, oy, oz, dx, dy, dz, ta, tb):
    """Closed-interval ray/AABB overlap; returns (hit, t_enter)."""
    t0 = ta
    t1 = tb
    for axis in range(3):
        mn = node_min[ni, axis]
        mx = node_max[ni, axis]
        if axis == 0:
            o = ox; d = dx
        elif axis == 1:
            o = oy; d = dy
        else:
            o = oz; d = dz
        if d != 0.0:
            inv = 1.0 / d
            ua = (mn - o) * inv
            ub = (mx - o) * inv
            if ua > ub:
                ua, ub = ub, ua
            if ua > t0:
                t0 = ua
            if ub < t1:
                t1 = ub
            if t0 > t1:
                return False, t0
        elif o < mn or o > mx:
            return False, t0
    return True, t0


@njit(cache=True, nogil=True)
def bvh_closest(node_min, node_max, node_a, node_n, pv0, pv1, pv2,
                ox, oy, oz, dx, dy, dz, ta, tb, stack, tstack, counters):
    """Closest triangle hit with t in the closed interval [ta, tb].

    Returns (t, slot); slot < 0 means miss. counters[0] += node visits,
    counters[1] += triangle tests.
    """
    best_t = np.inf
    best_slot = -1
    counters[0] += 1
    hit, tenter = _slab(node_min, node_max, 0, ox, oy, oz, dx, dy, dz, ta, tb)
    if not hit:
        return np.inf, -1
    sp = 0
    stack[0] = 0
    tstack[0] = tenter
    sp = 1
    while sp > 0:
        sp -= 1
        ni = stack[sp]
        limit = tb if best_t > tb else best_t
        if tstack[sp] > limit:
            continue
        n = node_n[ni]
        a = node_a[ni]
        if n > 0:
            for k in range(a, a + n):
                counters[1] += 1
                ok, t, u, v = _mt(pv0[k], pv1[k], pv2[k], ox, oy, oz, dx, dy, dz)
                if ok and ta <= t <= tb and t < best_t:
                    best_t = t
                    best_slot = k
        else:
            limit = tb if best_t > tb else best_t
            counters[0] += 2
            hl, tl = _slab(node_min, node_max, a, ox, oy, oz, dx, dy, dz, ta, limit)
            hr, tr = _slab(node_min, node_max, a + 1, ox, oy, oz, dx, dy, dz, ta, limit)
            if hl and hr:
                if tl <= tr:
                    stack[sp] = a + 1; tstack[sp] = tr; sp += 1
                    stack[sp] = a; tstack[sp] = tl; sp += 1
                else:
                    stack[sp] = a; tstack[sp] = tl; sp += 1
                    stack[sp] = a + 1; tstack[sp] = tr; sp += 1
            elif hl:
                stack[sp] = a; tstack[sp] = tl; sp += 1
            elif hr:
                stack[sp] = a + 1; tstack[sp] = tr; sp += 1
    if best_slot < 0:
        return np.inf, -1
    return best_t, best_slot


@njit(cache=True, nogil=True)
def bvh_any(node_min, node_max, node_a, node_n, pv0, pv1, pv2,
            ox, oy, oz, dx, dy, dz, ta, tb, stack, counters):
    """First triangle hit found (not necessarily closest) in [ta, tb]."""
    counters[0] += 1
    hit, _ = _slab(node_min, node_max, 0, ox, oy, oz, dx, dy, dz, ta, tb)
    if not hit:
        return np.inf, -1
    sp = 0
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        ni = stack[sp]
        n = node_n[ni]
        a = node_a[ni]
        if n > 0:
            for k in range(a, a + n):
                counters[1] += 1
                ok, t, u, v = _mt(pv0[k], pv1[k], pv2[k], ox, oy, oz, dx, dy, dz)
                if ok and ta <= t <= tb:
                    return t, k
        else:
            counters[0] += 2
            hl, _ = _slab(node_min, node_max, a, ox, oy, oz, dx, dy, dz, ta, tb)
            hr, _ = _slab(node_min, node_max, a + 1, ox, oy, oz, dx, dy, dz, ta, tb)
            if hl:
                stack[sp] = a
                sp += 1
            if hr:
                stack[sp] = a + 1
                sp += 1
    return np.inf, -1


@njit(cache=True, nogil=True)
def closest_batch(node_min, node_max, node_a, node_n, pv0, pv1, pv2,
                  origins, dirs, t0s, t1s, out_t, out_slot, counters):
    stack = np.empty(STACK_DEPTH, dtype=np.int32)
    tstack = np.empty(STACK_DEPTH, dtype=np.float64)
    for i in range(origins.shape[0]):
        t, slot = bvh_closest(
            node_min, node_max, node_a, node_n, pv0, pv1, pv2,
            origins[i, 0], origins[i, 1], origins[i, 2],
            dirs[i, 0], dirs[i, 1], dirs[i, 2],
            t0s[i], t1s[i], stack, tstack, counters)
        out_t[i] = t
        out_slot[i] = slot


# ---------------------------------------------------------------------------
# python-level API
# ---------------------------------------------------------------------------

def _check_unit(direction):
    d = np.asarray(direction, dtype=np.float64)
    if abs(np.linalg.norm(d) - 1.0) > 1e-6:
        raise ValueError("direction must be a unit vector")
    return d


def ray_triangle(origin, direction, triangle):
    """Intersect one ray with one triangle.

    Returns (t, barycentrics) with t > 0 and barycentrics summing to one,
    or None on a miss.
    """
    o = np.asarray(origin, dtype=np.float64)
    d = _check_unit(direction)
    tri = np.asarray(triangle, dtype=np.float64)
    ok, t, u, v = _mt(tri[0], tri[1], tri[2], o[0], o[1], o[2], d[0], d[1], d[2])
    if not ok or t <= 0.0:
        return None
    return float(t), np.array([1.0 - u - v, u, v])


def _hit_from_slot(bvh: Bvh, o, d, t: float, slot: int) -> HitResult:
    v0 = bvh.pv0[slot]
    n = np.cross(bvh.pv1[slot] - v0, bvh.pv2[slot] - v0)
    n = n / np.linalg.norm(n)
    if float(np.dot(n, d)) > 0.0:
        n = -n
    return HitResult(
        t=float(t),
        point=o + t * d,
        normal=n,
        source=TracerKind.EXACT,
        primitive=int(bvh.prim_id[slot]),
    )


def intersect_closest(bvh: Bvh, origin, direction, t_min: float, t_max: float,
                      stats: WorkStats | None = None) -> HitResult | None:
    """Closest hit with t in the closed interval [t_min, t_max]."""
    if t_min > t_max:
        raise ValueError("t_min must be <= t_max")
    o = np.asarray(origin, dtype=np.float64)
    d = _check_unit(direction)
    stack, tstack = bvh.new_stack()
    counters = np.zeros(2, dtype=np.int64)
    t, slot = bvh_closest(*bvh.arrays(), o[0], o[1], o[2], d[0], d[1], d[2],
                          float(t_min), float(t_max), stack, tstack, counters)
    if stats is not None:
        stats.bvh_node_visits += int(counters[0])
        stats.triangle_tests += int(counters[1])
    if slot < 0:
        return None
    return _hit_from_slot(bvh, o, d, t, slot)


def intersect_any(bvh: Bvh, origin, direction, t_min: float, t_max: float,
                  stats: WorkStats | None = None) -> HitResult | None:
    """Any hit with t in [t_min, t_max]; None when the interval is clear."""
    if t_min > t_max:
        raise ValueError("t_min must be <= t_max")
    o = np.asarray(origin, dtype=np.float64)
    d = _check_unit(direction)
    stack, _ = bvh.new_stack()
    counters = np.zeros(2, dtype=np.int64)
    t, slot = bvh_any(*bvh.arrays(), o[0], o[1], o[2], d[0], d[1], d[2],
                      float(t_min), float(t_max), stack, counters)
    if stats is not None:
        stats.bvh_node_visits += int(counters[0])
        stats.triangle_tests += int(counters[1])
    if slot < 0:
        return None
    return _hit_from_slot(bvh, o, d, t, slot)
