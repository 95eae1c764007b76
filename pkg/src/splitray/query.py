"""Split a ray query into per-tracer sub-intervals and run them.

The core idea: tile [t_min, t_max] with mutually exclusive segments, trace
each with either the exact BVH tracer or the distance-field marcher, order
execution by the query flag, and stop at the first hit.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import exact as _exact
from . import marcher as _marcher
from .errors import PlanMismatchError
from .exact import Bvh, HitResult, TracerKind
from .field import CascadedDistanceField, field_voxel_size_at
from .marcher import SphereTraceParams
from .stats import WorkStats


class Flag(enum.Enum):
    CLOSEST_HIT = "closest_hit"
    ANY_HIT = "any_hit"


class SplitKind(enum.Enum):
    OCCLUSION = "occlusion"
    SHADOW = "shadow"


class EngineMode(enum.Enum):
    EXACT_ONLY = "exact_only"
    COMBINED = "combined"
    FIELD_ONLY = "field_only"


@dataclass
class RayQuery:
    """The query tuple: origin, unit direction, t-interval, and hit flag."""

    origin: np.ndarray
    direction: np.ndarray
    t_min: float
    t_max: float
    flag: Flag = Flag.CLOSEST_HIT

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64)
        self.direction = np.asarray(self.direction, dtype=np.float64)
        if abs(np.linalg.norm(self.direction) - 1.0) > 1e-6:
            raise ValueError("direction must be a unit vector")
        if self.t_min > self.t_max:
            raise ValueError("t_min must be <= t_max")

    def point_at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


@dataclass
class Segment:
    """One sub-interval and the tracer assigned to it. Exact segments are
    closed at both ends; a field segment is open at any endpoint it shares
    with a neighboring segment, so a hit exactly on the boundary belongs to
    the exact side."""

    t0: float
    t1: float
    tracer: TracerKind
    lo_open: bool = False
    hi_open: bool = False

    @property
    def length(self) -> float:
        return self.t1 - self.t0


@dataclass
class SubQueryPlan:
    segments: list[Segment]
    execution_order: list[int]

    def validate(self, query: RayQuery) -> None:
        segs = self.segments
        if not segs:
            raise PlanMismatchError("plan has no segments")
        if segs[0].t0 != query.t_min or segs[-1].t1 != query.t_max:
            raise PlanMismatchError("plan does not span [t_min, t_max]")
        for a, b in zip(segs, segs[1:]):
            if a.t1 != b.t0:
                raise PlanMismatchError(f"gap between segments at {a.t1} vs {b.t0}")
        if sorted(self.execution_order) != list(range(len(segs))):
            raise PlanMismatchError("execution_order is not a permutation")


@dataclass
class SplitContext:
    """How to place the split points. ``multiplier`` scales the voxel size
    at the relevant ray endpoint into a split distance; ``t_ao`` is the
    occlusion query's maximum distance (informational for planning)."""

    kind: SplitKind
    multiplier: float = 8.0
    t_ao: float | None = None

    def __post_init__(self):
        if self.multiplier <= 0:
            raise ValueError("multiplier must be positive")
        if self.kind == SplitKind.OCCLUSION and self.t_ao is not None and self.t_ao <= 0:
            raise ValueError("t_ao must be positive")


# njit helpers shared by the python planner and the render-pass kernels

@njit(cache=True, nogil=True, inline="always")
def split_t1(origins, voxels, res, ox, oy, oz, dx, dy, dz, t_min, t_max, mult):
    """Near split point: t_min plus multiplier voxels at the interval start."""
    px = ox + t_min * dx
    py = oy + t_min * dy
    pz = oz + t_min * dz
    h = field_voxel_size_at(origins, voxels, res, px, py, pz)
    t1 = t_min + mult * h
    if t1 > t_max:
        t1 = t_max
    return t1


@njit(cache=True, nogil=True, inline="always")
def split_t2(origins, voxels, res, ox, oy, oz, dx, dy, dz, t1, t_max, mult):
    """Far split point: t_max minus multiplier voxels at the interval end."""
    px = ox + t_max * dx
    py = oy + t_max * dy
    pz = oz + t_max * dz
    h = field_voxel_size_at(origins, voxels, res, px, py, pz)
    t2 = t_max - mult * h
    if t2 < t1:
        t2 = t1
    if t2 > t_max:
        t2 = t_max
    return t2


def compute_splits(query: RayQuery, field_: CascadedDistanceField,
                   ctx: SplitContext) -> SubQueryPlan:
    """Place the split points and assemble the ordered sub-query plan.

    Occlusion: exact near the origin up to t1, field beyond. Shadow: exact
    near both the origin and the far end (where field deformations would
    distort shadows), field in the middle; the field segment vanishes when
    t1 meets t2. Zero-length segments are dropped.
    """
    _, origins, voxels = field_.packed()
    res = field_.resolution
    o = query.origin
    d = query.direction
    t1 = float(split_t1(origins, voxels, res, o[0], o[1], o[2], d[0], d[1], d[2],
                        query.t_min, query.t_max, ctx.multiplier))
    if ctx.kind == SplitKind.OCCLUSION:
        raw = [(query.t_min, t1, TracerKind.EXACT),
               (t1, query.t_max, TracerKind.FIELD)]
    else:
        t2 = float(split_t2(origins, voxels, res, o[0], o[1], o[2], d[0], d[1], d[2],
                            t1, query.t_max, ctx.multiplier))
        if t1 >= t2:
            raw = [(query.t_min, query.t_max, TracerKind.EXACT)]
        else:
            raw = [(query.t_min, t1, TracerKind.EXACT),
                   (t1, t2, TracerKind.FIELD),
                   (t2, query.t_max, TracerKind.EXACT)]
    kept = [(a, b, k) for a, b, k in raw if b > a]
    if not kept:
        kept = [(query.t_min, query.t_max, TracerKind.EXACT)]
    segments = []
    for i, (a, b, k) in enumerate(kept):
        lo_open = k == TracerKind.FIELD and i > 0
        hi_open = k == TracerKind.FIELD and i < len(kept) - 1
        segments.append(Segment(a, b, k, lo_open, hi_open))
    if query.flag == Flag.ANY_HIT:
        order = [i for i, s in enumerate(segments) if s.tracer == TracerKind.FIELD]
        order += [i for i, s in enumerate(segments) if s.tracer == TracerKind.EXACT]
    else:
        order = list(range(len(segments)))
    return SubQueryPlan(segments=segments, execution_order=order)


def _run_segment(seg: Segment, query: RayQuery, bvh: Bvh,
                 field_: CascadedDistanceField | None,
                 params: SphereTraceParams, stats: WorkStats) -> HitResult | None:
    if seg.tracer == TracerKind.EXACT:
        fn = _exact.intersect_closest if query.flag == Flag.CLOSEST_HIT else _exact.intersect_any
        return fn(bvh, query.origin, query.direction, seg.t0, seg.t1, stats)
    return _marcher.sphere_trace(field_, query.origin, query.direction,
                                 seg.t0, seg.t1, params, stats,
                                 lo_open=seg.lo_open, hi_open=seg.hi_open)


def trace_combined(plan: SubQueryPlan, query: RayQuery, bvh: Bvh,
                   field_: CascadedDistanceField,
                   params: SphereTraceParams | None = None
                   ) -> tuple[HitResult | None, WorkStats]:
    """Run the plan's segments in execution order, stopping at the first hit.

    For closest-hit plans the order is ascending-t, so the first segment
    that reports a hit holds the overall closest one its tracer can see.
    """
    plan.validate(query)
    params = params or SphereTraceParams()
    stats = WorkStats(rays=1)
    for si in plan.execution_order:
        hit = _run_segment(plan.segments[si], query, bvh, field_, params, stats)
        if hit is not None:
            return hit, stats
    return None, stats


def trace_pure(query: RayQuery, mode: EngineMode, bvh: Bvh | None,
               field_: CascadedDistanceField | None,
               params: SphereTraceParams | None = None
               ) -> tuple[HitResult | None, WorkStats]:
    """Single-tracer execution over the whole interval (no plan overhead)."""
    params = params or SphereTraceParams()
    stats = WorkStats(rays=1)
    if mode == EngineMode.EXACT_ONLY:
        fn = _exact.intersect_closest if query.flag == Flag.CLOSEST_HIT else _exact.intersect_any
        hit = fn(bvh, query.origin, query.direction, query.t_min, query.t_max, stats)
    elif mode == EngineMode.FIELD_ONLY:
        hit = _marcher.sphere_trace(field_, query.origin, query.direction,
                                    query.t_min, query.t_max, params, stats)
    else:
        raise ValueError("trace_pure handles exact_only or field_only; "
                         "use compute_splits + trace_combined for combined mode")
    return hit, stats


def trace_query(query: RayQuery, mode: EngineMode, bvh: Bvh | None,
                field_: CascadedDistanceField | None, ctx: SplitContext,
                params: SphereTraceParams | None = None
                ) -> tuple[HitResult | None, WorkStats]:
    """Mode dispatch: plan + combined trace, or the matching pure tracer."""
    if mode == EngineMode.COMBINED:
        plan = compute_splits(query, field_, ctx)
        return trace_combined(plan, query, bvh, field_, params)
    return trace_pure(query, mode, bvh, field_, params)
