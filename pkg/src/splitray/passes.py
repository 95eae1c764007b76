"""Render passes over a primary-visibility buffer: ambient occlusion and
direct-light shadow rays, each runnable in exact-only, combined, or
field-only mode.

Work is farmed to a pool of tile workers (8x8 tiles by default; cap the
pool with the THREADS environment variable). Every tile owns a disjoint
image region and its own counter row, and the per-ray RNG is keyed on
(seed, tile, pixel, frame), so results are byte-identical regardless of
how tiles are scheduled.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import DimensionMismatchError
from .exact import STACK_DEPTH, Bvh, bvh_any, bvh_closest
from .field import CascadedDistanceField
from .marcher import SphereTraceParams, sphere_trace_kernel
from .query import EngineMode, SplitContext, split_t1, split_t2
from .rng import U64, cosine_direction, hash2, ray_uniforms
from .scene import Camera, PointLight, Scene
from .stats import WorkStats

MODE_EXACT = 0
MODE_COMBINED = 1
MODE_FIELD = 2
_MODE_CODE = {
    EngineMode.EXACT_ONLY: MODE_EXACT,
    EngineMode.COMBINED: MODE_COMBINED,
    EngineMode.FIELD_ONLY: MODE_FIELD,
}


@dataclass
class GBuffer:
    """Per-pixel geometry from primary visibility; ray origins for passes."""

    hit: np.ndarray        # (H, W) uint8
    position: np.ndarray   # (H, W, 3)
    normal: np.ndarray     # (H, W, 3), faces the camera
    albedo: np.ndarray     # (H, W, 3)
    primitive: np.ndarray  # (H, W) int64, -1 on miss

    @property
    def height(self) -> int:
        return self.hit.shape[0]

    @property
    def width(self) -> int:
        return self.hit.shape[1]


@dataclass
class Accumulator:
    """Running per-pixel mean over accumulated sample images."""

    mean: np.ndarray | None = None
    count: int = 0


def accumulate(acc: Accumulator, image: np.ndarray) -> Accumulator:
    """Fold one sample image into the running mean."""
    image = np.asarray(image, dtype=np.float64)
    if acc.mean is None:
        acc.mean = image.copy()
        acc.count = 1
        return acc
    if acc.mean.shape != image.shape:
        raise DimensionMismatchError(
            f"accumulator shape {acc.mean.shape} vs image {image.shape}")
    acc.count += 1
    acc.mean += (image - acc.mean) / acc.count
    return acc


def hemisphere_sample(normal, rng: np.random.Generator) -> np.ndarray:
    """Cosine-weighted direction in the hemisphere around a unit normal."""
    n = np.asarray(normal, dtype=np.float64)
    u1, u2 = rng.random(2)
    return np.array(cosine_direction(n[0], n[1], n[2], u1, u2))


def dummy_field_arrays():
    """Placeholder field arrays for modes that never sample the field."""
    dist = np.full((1, 2, 2, 2), np.inf)
    origins = np.zeros((1, 3))
    voxels = np.ones(1)
    return dist, origins, voxels, 2


def _field_arrays(field_: CascadedDistanceField | None):
    if field_ is None:
        return dummy_field_arrays()
    dist, origins, voxels = field_.packed()
    return dist, origins, voxels, field_.resolution


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True, inline="always")
def _trace_occlusion(mode, node_min, node_max, node_a, node_n, pv0, pv1, pv2,
                     dist, origins, voxels, res,
                     ox, oy, oz, dx, dy, dz, ta, tb, mult,
                     eps_f, max_steps, min_f, stack, tstack, counters):
    """First-hit occlusion query routed by engine mode; (hit, t)."""
    if mode == MODE_EXACT:
        t, slot = bvh_closest(node_min, node_max, node_a, node_n, pv0, pv1, pv2,
                              ox, oy, oz, dx, dy, dz, ta, tb, stack, tstack, counters)
        return slot >= 0, t
    if mode == MODE_FIELD:
        hit, t, steps = sphere_trace_kernel(dist, origins, voxels, res,
                                            ox, oy, oz, dx, dy, dz, ta, tb,
                                            False, False, eps_f, max_steps, min_f)
        counters[2] += steps
        return hit, t
    t1 = split_t1(origins, voxels, res, ox, oy, oz, dx, dy, dz, ta, tb, mult)
    if t1 > ta:
        t, slot = bvh_closest(node_min, node_max, node_a, node_n, pv0, pv1, pv2,
                              ox, oy, oz, dx, dy, dz, ta, t1, stack, tstack, counters)
        if slot >= 0:
            return True, t
    if t1 < tb:
        hit, t, steps = sphere_trace_kernel(dist, origins, voxels, res,
                                            ox, oy, oz, dx, dy, dz, t1, tb,
                                            t1 > ta, False, eps_f, max_steps, min_f)
        counters[2] += steps
        if hit:
            return True, t
    return False, np.inf


@njit(cache=True, nogil=True, inline="always")
def _trace_shadow(mode, node_min, node_max, node_a, node_n, pv0, pv1, pv2,
                  dist, origins, voxels, res,
                  ox, oy, oz, dx, dy, dz, ta, tb, mult,
                  eps_f, max_steps, min_f, stack, counters):
    """Any-hit shadow query with the two-split plan in combined mode.

    Field segments run first (any-hit order), then the exact spans near the
    origin and near the light."""
    if mode == MODE_EXACT:
        t, slot = bvh_any(node_min, node_max, node_a, node_n, pv0, pv1, pv2,
                          ox, oy, oz, dx, dy, dz, ta, tb, stack, counters)
        return slot >= 0
    if mode == MODE_FIELD:
        hit, t, steps = sphere_trace_kernel(dist, origins, voxels, res,
                                            ox, oy, oz, dx, dy, dz, ta, tb,
                                            False, False, eps_f, max_steps, min_f)
        counters[2] += steps
        return hit
    t1 = split_t1(origins, voxels, res, ox, oy, oz, dx, dy, dz, ta, tb, mult)
    t2 = split_t2(origins, voxels, res, ox, oy, oz, dx, dy, dz, t1, tb, mult)
    if t1 >= t2:
        t, slot = bvh_any(node_min, node_max, node_a, node_n, pv0, pv1, pv2,
                          ox, oy, oz, dx, dy, dz, ta, tb, stack, counters)
        return slot >= 0
    hit, t, steps = sphere_trace_kernel(dist, origins, voxels, res,
                                        ox, oy, oz, dx, dy, dz, t1, t2,
                                        t1 > ta, t2 < tb, eps_f, max_steps, min_f)
    counters[2] += steps
    if hit:
        return True
    if t1 > ta:
        t, slot = bvh_any(node_min, node_max, node_a, node_n, pv0, pv1, pv2,
                          ox, oy, oz, dx, dy, dz, ta, t1, stack, counters)
        if slot >= 0:
            return True
    if t2 < tb:
        t, slot = bvh_any(node_min, node_max, node_a, node_n, pv0, pv1, pv2,
                          ox, oy, oz, dx, dy, dz, t2, tb, stack, counters)
        if slot >= 0:
            return True
    return False


@njit(cache=True, nogil=True)
def _primary_kernel(node_min, node_max, node_a, node_n, pv0, pv1, pv2,
                    prim_id, tri_mesh, albedos,
                    cx, cy, cz, rx, ry, rz, ux, uy, uz, fx, fy, fz,
                    tanv, aspect, width, height,
                    hit, position, normal, albedo, primitive, counters):
    stack = np.empty(STACK_DEPTH, dtype=np.int32)
    tstack = np.empty(STACK_DEPTH, dtype=np.float64)
    for py in range(height):
        ndc_y = (1.0 - 2.0 * (py + 0.5) / height) * tanv
        for px in range(width):
            ndc_x = (2.0 * (px + 0.5) / width - 1.0) * tanv * aspect
            dx = fx + ndc_x * rx + ndc_y * ux
            dy = fy + ndc_x * ry + ndc_y * uy
            dz = fz + ndc_x * rz + ndc_y * uz
            inv = 1.0 / math.sqrt(dx * dx + dy * dy + dz * dz)
            dx *= inv
            dy *= inv
            dz *= inv
            counters[3] += 1
            t, slot = bvh_closest(node_min, node_max, node_a, node_n, pv0, pv1, pv2,
                                  cx, cy, cz, dx, dy, dz, 0.0, np.inf,
                                  stack, tstack, counters)
            if slot < 0:
                hit[py, px] = 0
                primitive[py, px] = -1
                continue
            hit[py, px] = 1
            position[py, px, 0] = cx + t * dx
            position[py, px, 1] = cy + t * dy
            position[py, px, 2] = cz + t * dz
            e1x = pv1[slot, 0] - pv0[slot, 0]
            e1y = pv1[slot, 1] - pv0[slot, 1]
            e1z = pv1[slot, 2] - pv0[slot, 2]
            e2x = pv2[slot, 0] - pv0[slot, 0]
            e2y = pv2[slot, 1] - pv0[slot, 1]
            e2z = pv2[slot, 2] - pv0[slot, 2]
            nx = e1y * e2z - e1z * e2y
            ny = e1z * e2x - e1x * e2z
            nz = e1x * e2y - e1y * e2x
            ninv = 1.0 / math.sqrt(nx * nx + ny * ny + nz * nz)
            nx *= ninv
            ny *= ninv
            nz *= ninv
            if nx * dx + ny * dy + nz * dz > 0.0:
                nx = -nx
                ny = -ny
                nz = -nz
            normal[py, px, 0] = nx
            normal[py, px, 1] = ny
            normal[py, px, 2] = nz
            pid = prim_id[slot]
            primitive[py, px] = pid
            mi = tri_mesh[pid]
            albedo[py, px, 0] = albedos[mi, 0]
            albedo[py, px, 1] = albedos[mi, 1]
            albedo[py, px, 2] = albedos[mi, 2]


@njit(cache=True, nogil=True)
def _ao_tiles_kernel(tiles, gb_hit, gb_pos, gb_nrm,
                     node_min, node_max, node_a, node_n, pv0, pv1, pv2,
                     dist, origins, voxels, res,
                     mode, mult, t_ao, bias, falloff,
                     eps_f, max_steps, min_f, seed, frame,
                     out, tile_counters):
    stack = np.empty(STACK_DEPTH, dtype=np.int32)
    tstack = np.empty(STACK_DEPTH, dtype=np.float64)
    width = gb_hit.shape[1]
    for ti in range(tiles.shape[0]):
        x0 = tiles[ti, 0]
        x1 = tiles[ti, 1]
        y0 = tiles[ti, 2]
        y1 = tiles[ti, 3]
        tid = tiles[ti, 4]
        skey = hash2(U64(seed), U64(tid))
        counters = tile_counters[tid]
        for py in range(y0, y1):
            for px in range(x0, x1):
                if gb_hit[py, px] == 0:
                    out[py, px] = 1.0
                    continue
                nx = gb_nrm[py, px, 0]
                ny = gb_nrm[py, px, 1]
                nz = gb_nrm[py, px, 2]
                ox = gb_pos[py, px, 0] + bias * nx
                oy = gb_pos[py, px, 1] + bias * ny
                oz = gb_pos[py, px, 2] + bias * nz
                u1, u2 = ray_uniforms(skey, py * width + px, frame)
                dx, dy, dz = cosine_direction(nx, ny, nz, u1, u2)
                counters[3] += 1
                hit, t = _trace_occlusion(
                    mode, node_min, node_max, node_a, node_n, pv0, pv1, pv2,
                    dist, origins, voxels, res,
                    ox, oy, oz, dx, dy, dz, 0.0, t_ao, mult,
                    eps_f, max_steps, min_f, stack, tstack, counters)
                if hit:
                    out[py, px] = 1.0 - math.exp(-t / t_ao) if falloff else 0.0
                else:
                    out[py, px] = 1.0


@njit(cache=True, nogil=True)
def _shadow_tiles_kernel(tiles, gb_hit, gb_pos, gb_nrm, gb_alb,
                         node_min, node_max, node_a, node_n, pv0, pv1, pv2,
                         dist, origins, voxels, res,
                         light_pos, light_intensity,
                         mode, mult, bias, light_eps,
                         eps_f, max_steps, min_f,
                         out, tile_counters):
    stack = np.empty(STACK_DEPTH, dtype=np.int32)
    for ti in range(tiles.shape[0]):
        x0 = tiles[ti, 0]
        x1 = tiles[ti, 1]
        y0 = tiles[ti, 2]
        y1 = tiles[ti, 3]
        tid = tiles[ti, 4]
        counters = tile_counters[tid]
        for py in range(y0, y1):
            for px in range(x0, x1):
                out[py, px, 0] = 0.0
                out[py, px, 1] = 0.0
                out[py, px, 2] = 0.0
                if gb_hit[py, px] == 0:
                    continue
                nx = gb_nrm[py, px, 0]
                ny = gb_nrm[py, px, 1]
                nz = gb_nrm[py, px, 2]
                ox = gb_pos[py, px, 0] + bias * nx
                oy = gb_pos[py, px, 1] + bias * ny
                oz = gb_pos[py, px, 2] + bias * nz
                for li in range(light_pos.shape[0]):
                    vx = light_pos[li, 0] - ox
                    vy = light_pos[li, 1] - oy
                    vz = light_pos[li, 2] - oz
                    dist_l = math.sqrt(vx * vx + vy * vy + vz * vz)
                    if dist_l <= light_eps:
                        continue
                    dx = vx / dist_l
                    dy = vy / dist_l
                    dz = vz / dist_l
                    cos_t = nx * dx + ny * dy + nz * dz
                    if cos_t <= 0.0:
                        continue
                    counters[3] += 1
                    occluded = _trace_shadow(
                        mode, node_min, node_max, node_a, node_n, pv0, pv1, pv2,
                        dist, origins, voxels, res,
                        ox, oy, oz, dx, dy, dz, 0.0, dist_l - light_eps, mult,
                        eps_f, max_steps, min_f, stack, counters)
                    if occluded:
                        continue
                    scale = cos_t / (math.pi * dist_l * dist_l)
                    out[py, px, 0] += gb_alb[py, px, 0] * light_intensity[li, 0] * scale
                    out[py, px, 1] += gb_alb[py, px, 1] * light_intensity[li, 1] * scale
                    out[py, px, 2] += gb_alb[py, px, 2] * light_intensity[li, 2] * scale


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------

def worker_count() -> int:
    """Pool size for tile workers; the THREADS env var caps it."""
    n = os.cpu_count() or 1
    env = os.environ.get("THREADS")
    if env:
        try:
            n = max(1, min(n, int(env)))
        except ValueError:
            pass
    return n


def make_tiles(width: int, height: int, tile_size: int = 8) -> np.ndarray:
    """Row-major tile rectangles [x0, x1, y0, y1, tile_id]."""
    rows = []
    tid = 0
    for y0 in range(0, height, tile_size):
        for x0 in range(0, width, tile_size):
            rows.append((x0, min(x0 + tile_size, width),
                         y0, min(y0 + tile_size, height), tid))
            tid += 1
    return np.asarray(rows, dtype=np.int64)


def _run_tiled(call, tiles: np.ndarray) -> None:
    workers = worker_count()
    if workers <= 1 or len(tiles) <= 1:
        call(tiles)
        return
    chunks = [c for c in np.array_split(tiles, workers) if len(c)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(call, chunk) for chunk in chunks]
        for f in futures:
            f.result()


def _stats_from_tiles(tile_counters: np.ndarray) -> WorkStats:
    totals = tile_counters.sum(axis=0)
    return WorkStats(
        bvh_node_visits=int(totals[0]),
        triangle_tests=int(totals[1]),
        sphere_trace_steps=int(totals[2]),
        rays=int(totals[3]),
    )


def primary_visibility(scene: Scene, bvh: Bvh, camera: Camera | None = None,
                       stats: WorkStats | None = None) -> GBuffer:
    """Exact closest-hit trace over [0, inf) for every pixel."""
    cam = camera or scene.camera
    if cam is None:
        raise ValueError("no camera provided")
    w, h = cam.resolution
    gb = GBuffer(
        hit=np.zeros((h, w), dtype=np.uint8),
        position=np.zeros((h, w, 3)),
        normal=np.zeros((h, w, 3)),
        albedo=np.zeros((h, w, 3)),
        primitive=np.full((h, w), -1, dtype=np.int64),
    )
    counters = np.zeros(4, dtype=np.int64)
    tanv = math.tan(cam.fov / 2.0)
    _primary_kernel(*bvh.arrays(), bvh.prim_id, scene.triangle_mesh_id, scene.albedos,
                    cam.position[0], cam.position[1], cam.position[2],
                    cam.right[0], cam.right[1], cam.right[2],
                    cam.up[0], cam.up[1], cam.up[2],
                    cam.forward[0], cam.forward[1], cam.forward[2],
                    tanv, w / h, w, h,
                    gb.hit, gb.position, gb.normal, gb.albedo, gb.primitive, counters)
    if stats is not None:
        stats.bvh_node_visits += int(counters[0])
        stats.triangle_tests += int(counters[1])
        stats.rays += int(counters[3])
    return gb


def ao_pass(gbuffer: GBuffer, mode: EngineMode, field_: CascadedDistanceField | None,
            bvh: Bvh, ctx: SplitContext, seed: int, frame: int = 0,
            normal_bias: float = 0.15,
            trace: SphereTraceParams | None = None,
            distance_falloff: bool = False,
            tile_size: int = 8) -> tuple[np.ndarray, WorkStats]:
    """One frame of randomized occlusion rays; values in [0, 1].

    Per hit pixel: one cosine-weighted first-hit query over [0, t_ao] from
    the biased surface point; 0 when occluded (optionally a distance
    falloff), 1 otherwise. Miss pixels are 1. Deterministic per
    (seed, tile, pixel, frame).
    """
    trace = trace or SphereTraceParams()
    t_ao = ctx.t_ao if ctx.t_ao is not None else 10.0
    h, w = gbuffer.hit.shape
    out = np.zeros((h, w))
    tiles = make_tiles(w, h, tile_size)
    tile_counters = np.zeros((len(tiles), 4), dtype=np.int64)
    dist, origins, voxels, res = _field_arrays(field_)
    mode_code = _MODE_CODE[mode]

    def call(chunk):
        _ao_tiles_kernel(chunk, gbuffer.hit, gbuffer.position, gbuffer.normal,
                         *bvh.arrays(), dist, origins, voxels, res,
                         mode_code, ctx.multiplier, t_ao, normal_bias,
                         distance_falloff,
                         trace.hit_epsilon_factor, trace.max_steps,
                         trace.min_step_factor,
                         U64(seed), frame, out, tile_counters)

    _run_tiled(call, tiles)
    stats = _stats_from_tiles(tile_counters)
    stats.extra["tile_counters"] = tile_counters
    return out, stats


def shadow_pass(gbuffer: GBuffer, lights: list[PointLight], mode: EngineMode,
                field_: CascadedDistanceField | None, bvh: Bvh, ctx: SplitContext,
                normal_bias: float = 0.15,
                light_epsilon: float = 1e-3,
                trace: SphereTraceParams | None = None,
                tile_size: int = 8) -> tuple[np.ndarray, WorkStats]:
    """Direct lighting with any-hit shadow rays through the two-split plan.

    Unoccluded lights contribute Lambertian shading
    albedo * intensity * cos(theta) / (pi * r^2); occluded ones nothing.
    """
    if not lights:
        raise ValueError("shadow pass needs at least one light")
    trace = trace or SphereTraceParams()
    h, w = gbuffer.hit.shape
    out = np.zeros((h, w, 3))
    tiles = make_tiles(w, h, tile_size)
    tile_counters = np.zeros((len(tiles), 4), dtype=np.int64)
    dist, origins, voxels, res = _field_arrays(field_)
    light_pos = np.ascontiguousarray(np.stack([l.position for l in lights]))
    light_int = np.ascontiguousarray(np.stack([l.intensity for l in lights]))
    mode_code = _MODE_CODE[mode]

    def call(chunk):
        _shadow_tiles_kernel(chunk, gbuffer.hit, gbuffer.position, gbuffer.normal,
                             gbuffer.albedo, *bvh.arrays(),
                             dist, origins, voxels, res,
                             light_pos, light_int,
                             mode_code, ctx.multiplier, normal_bias, light_epsilon,
                             trace.hit_epsilon_factor, trace.max_steps,
                             trace.min_step_factor,
                             out, tile_counters)

    _run_tiled(call, tiles)
    stats = _stats_from_tiles(tile_counters)
    stats.extra["tile_counters"] = tile_counters
    return out, stats
