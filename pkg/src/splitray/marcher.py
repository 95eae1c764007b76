"""Sphere tracing against the cascaded distance field over a t-interval.

The hit threshold and the minimum step both scale with the voxel size of
the cascade the sample came from, so the marcher adapts as a ray moves
between fine and coarse cascades.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .exact import HitResult, TracerKind
from .field import CascadedDistanceField, field_gradient, field_sample
from .stats import WorkStats


@dataclass
class SphereTraceParams:
    """Marcher constants; epsilon and the step floor are in units of the
    active cascade's voxel size."""

    hit_epsilon_factor: float = 0.5
    max_steps: int = 256
    min_step_factor: float = 0.1

    def __post_init__(self):
        if self.hit_epsilon_factor <= 0:
            raise ValueError("hit_epsilon_factor must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.min_step_factor <= 0:
            raise ValueError("min_step_factor must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "SphereTraceParams":
        return cls(
            hit_epsilon_factor=float(d.get("hit_epsilon_factor", 0.5)),
            max_steps=int(d.get("max_steps", 256)),
            min_step_factor=float(d.get("min_step_factor", 0.1)),
        )


@njit(cache=True, nogil=True)
def sphere_trace_kernel(dist, origins, voxels, res,
                        ox, oy, oz, dx, dy, dz, ta, tb,
                        lo_open, hi_open, eps_factor, max_steps, min_step_factor):
    """March t from ta; each sampled distance is both the hit test and the
    step size. Returns (hit, t, steps). A boundary hit exactly at an open
    endpoint is skipped (it belongs to the adjacent exact segment)."""
    t = ta
    steps = 0
    while steps < max_steps:
        if t > tb:
            return False, t, steps
        px = ox + t * dx
        py = oy + t * dy
        pz = oz + t * dz
        d, h, _ = field_sample(dist, origins, voxels, res, px, py, pz)
        steps += 1
        if d < eps_factor * h:
            if not ((lo_open and t == ta) or (hi_open and t == tb)):
                return True, t, steps
        step = d
        floor = min_step_factor * h
        if step < floor:
            step = floor
        t += step
    return False, t, steps


def sphere_trace(field_: CascadedDistanceField, origin, direction,
                 t_min: float, t_max: float,
                 params: SphereTraceParams | None = None,
                 stats: WorkStats | None = None,
                 lo_open: bool = False, hi_open: bool = False) -> HitResult | None:
    """Sphere trace the closed interval [t_min, t_max] (open ends optional).

    Any-hit behaves identically: the first epsilon-hit is the answer either
    way. Step exhaustion counts as a miss.
    """
    if t_min > t_max:
        raise ValueError("t_min must be <= t_max")
    p = params or SphereTraceParams()
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    if abs(np.linalg.norm(d) - 1.0) > 1e-6:
        raise ValueError("direction must be a unit vector")
    dist, origins, voxels = field_.packed()
    res = field_.resolution
    hit, t, steps = sphere_trace_kernel(
        dist, origins, voxels, res,
        o[0], o[1], o[2], d[0], d[1], d[2],
        float(t_min), float(t_max), lo_open, hi_open,
        p.hit_epsilon_factor, p.max_steps, p.min_step_factor)
    if stats is not None:
        stats.sphere_trace_steps += int(steps)
    if not hit:
        return None
    point = o + t * d
    n = field_gradient(dist, origins, voxels, res, point[0], point[1], point[2])
    normal = np.array(n)
    if float(np.dot(normal, d)) > 0.0:
        normal = -normal
    return HitResult(t=float(t), point=point, normal=normal,
                     source=TracerKind.FIELD, primitive=None)
