"""Procedurally generated desk-scale test scenes.

Three scenes cover the regimes the tracer cares about: an enclosed room
with near-field occluders (cornell), an open column-grid hall for long
divergent rays (hall), and a thin fin next to a light whose shadow is
destroyed by field blobbing (fins). All geometry is generated so the
repository is self-contained.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .scene import Camera, PointLight, Scene, TriangleMesh, save_obj

_BOX_FACES = np.array([
    (0, 1, 2), (0, 2, 3),  # y = lo
    (4, 6, 5), (4, 7, 6),  # y = hi
    (0, 4, 5), (0, 5, 1),  # z = lo
    (3, 2, 6), (3, 6, 7),  # z = hi
    (0, 3, 7), (0, 7, 4),  # x = lo
    (1, 5, 6), (1, 6, 2),  # x = hi
], dtype=np.int64)


def _box(lo, hi, rot_y: float = 0.0, pivot=None):
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    v = np.array([
        [lo[0], lo[1], lo[2]], [hi[0], lo[1], lo[2]],
        [hi[0], lo[1], hi[2]], [lo[0], lo[1], hi[2]],
        [lo[0], hi[1], lo[2]], [hi[0], hi[1], lo[2]],
        [hi[0], hi[1], hi[2]], [lo[0], hi[1], hi[2]],
    ])
    if rot_y:
        p = np.asarray(pivot if pivot is not None else 0.5 * (lo + hi), dtype=np.float64)
        c, s = math.cos(rot_y), math.sin(rot_y)
        x = v[:, 0] - p[0]
        z = v[:, 2] - p[2]
        v[:, 0] = p[0] + c * x + s * z
        v[:, 2] = p[2] - s * x + c * z
    return v, _BOX_FACES.copy()


def _quad(a, b, c, d):
    v = np.array([a, b, c, d], dtype=np.float64)
    f = np.array([(0, 1, 2), (0, 2, 3)], dtype=np.int64)
    return v, f


def _patch(origin, eu, ev, nu: int, nv: int):
    """Quad grid spanning origin + u*eu + v*ev, tessellated nu x nv."""
    origin = np.asarray(origin, dtype=np.float64)
    eu = np.asarray(eu, dtype=np.float64)
    ev = np.asarray(ev, dtype=np.float64)
    us = np.linspace(0.0, 1.0, nu + 1)
    vs = np.linspace(0.0, 1.0, nv + 1)
    verts = (origin[None, None, :] + us[:, None, None] * eu[None, None, :]
             + vs[None, :, None] * ev[None, None, :]).reshape(-1, 3)
    faces = []
    for i in range(nu):
        for j in range(nv):
            a = i * (nv + 1) + j
            b = (i + 1) * (nv + 1) + j
            faces.append((a, b, b + 1))
            faces.append((a, b + 1, a + 1))
    return verts, np.asarray(faces, dtype=np.int64)


def _box_tess(lo, hi, n: int):
    """Box with each face tessellated n x n, as a list of patch parts."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    d = hi - lo
    ex = np.array([d[0], 0, 0])
    ey = np.array([0, d[1], 0])
    ez = np.array([0, 0, d[2]])
    return [
        _patch(lo, ex, ez, n, n),                      # bottom
        _patch(lo + ey, ez, ex, n, n),                 # top
        _patch(lo, ez, ey, n, n),                      # x = lo
        _patch(lo + ex, ey, ez, n, n),                 # x = hi
        _patch(lo, ey, ex, n, n),                      # z = lo
        _patch(lo + ez, ex, ey, n, n),                 # z = hi
    ]


def _mesh(parts, albedo) -> TriangleMesh:
    verts = []
    faces = []
    off = 0
    for v, f in parts:
        verts.append(v)
        faces.append(f + off)
        off += len(v)
    return TriangleMesh(np.concatenate(verts), np.concatenate(faces), albedo=np.asarray(albedo))


def make_cornell() -> Scene:
    """Cornell-box variant: 5 m room open toward the camera, two rotated
    boxes, plus thin furniture and trim whose contact occlusion separates
    the tracers; one light near the ceiling."""
    s = 5.0
    white = _mesh([
        _quad((0, 0, 0), (s, 0, 0), (s, 0, s), (0, 0, s)),      # floor
        _quad((0, s, 0), (0, s, s), (s, s, s), (s, s, 0)),      # ceiling
        _quad((0, 0, s), (s, 0, s), (s, s, s), (0, s, s)),      # back wall
    ], (0.73, 0.73, 0.73))
    red = _mesh([_quad((0, 0, 0), (0, 0, s), (0, s, s), (0, s, 0))], (0.63, 0.065, 0.05))
    green = _mesh([_quad((s, 0, 0), (s, s, 0), (s, s, s), (s, 0, s))], (0.14, 0.45, 0.09))
    tall = _mesh([_box((0.9, 0.0, 2.9), (2.4, 3.0, 4.4), rot_y=math.radians(17))],
                 (0.73, 0.73, 0.73))
    short = _mesh([_box((2.9, 0.0, 1.4), (4.4, 1.5, 2.9), rot_y=math.radians(-18))],
                  (0.73, 0.73, 0.73))
    # thin near-field detail: contact occlusion that coarse fields blob away
    table = _mesh([
        _box((3.1, 1.0, 0.4), (4.3, 1.12, 1.15)),
        _box((3.15, 0.0, 0.45), (3.27, 1.0, 0.57)),
        _box((4.13, 0.0, 0.45), (4.25, 1.0, 0.57)),
        _box((3.15, 0.0, 0.98), (3.27, 1.0, 1.1)),
        _box((4.13, 0.0, 0.98), (4.25, 1.0, 1.1)),
    ], (0.45, 0.31, 0.18))
    slats = _mesh([
        _box((4.78, 0.0, 1.0 + 0.5 * i), (4.93, 2.2, 1.07 + 0.5 * i))
        for i in range(5)
    ], (0.73, 0.73, 0.73))
    trim_parts = [
        _box((0.0, 0.0, 4.87), (s, 0.13, 4.95)),          # back wall baseboard
        _box((0.05, 0.0, 0.0), (0.13, 0.13, s)),          # left baseboard
        _box((s - 0.13, 0.0, 0.0), (s - 0.05, 0.13, s)),  # right baseboard
        _box((0.0, s - 0.13, 4.87), (s, s - 0.05, 4.95)),  # back cornice
    ]
    rng = np.random.default_rng(7)
    for _ in range(9):
        cx, cz = rng.uniform(0.5, s - 0.5, 2)
        w, hgt, dp = rng.uniform(0.13, 0.45, 3)
        trim_parts.append(_box((cx - w / 2, 0.0, cz - dp / 2),
                               (cx + w / 2, hgt, cz + dp / 2),
                               rot_y=rng.uniform(0, math.pi)))
    clutter = _mesh(trim_parts, (0.66, 0.62, 0.55))
    camera = Camera(position=(2.5, 2.5, 0.08), forward=(0, 0, 1), up=(0, 1, 0),
                    fov=math.radians(55), resolution=(256, 256))
    light = PointLight((2.5, 4.67, 2.5), (33.0, 33.0, 33.0))
    return Scene(meshes=[white, red, green, tall, short, table, slats, clutter],
                 lights=[light], camera=camera)


def _triangle_soup(count: int, lo, hi, sigma: float, rng, clear_halfwidth=None):
    """Random small triangles filling a box, foliage-style; optionally keeps
    a lane |x| < clear_halfwidth free."""
    tris = []
    while len(tris) < count:
        c = rng.uniform(lo, hi)
        if clear_halfwidth is not None and abs(c[0]) < clear_halfwidth:
            continue
        tris.append([c + rng.normal(0.0, sigma, 3) for _ in range(3)])
    return np.asarray(tris)


def make_hall(columns: int = 10, spacing: float = 2.0, height: float = 10.0) -> Scene:
    """Column-grid hall under a foliage-like canopy on a large ground plane.

    Long divergent AO rays thread dense overlapping geometry here, the
    regime where exact tracing is expensive and the combined split pays
    off. Clutter is deterministic (fixed generator seed)."""
    half = 30.0
    ground = _mesh([_patch((-half, 0.0, -half), (2 * half, 0, 0), (0, 0, 2 * half), 10, 10)],
                   (0.55, 0.55, 0.55))
    parts = []
    start = -0.5 * spacing * (columns - 1)
    for i in range(columns):
        for j in range(columns):
            cx = start + spacing * i
            cz = start + spacing * j
            parts.extend(_box_tess((cx - 0.35, 0.0, cz - 0.35),
                                   (cx + 0.35, height, cz + 0.35), 3))
    pillars = _mesh(parts, (0.7, 0.65, 0.55))
    rng = np.random.default_rng(20240817)
    hedges = _triangle_soup(9000, (-9.0, 0.1, -9.0), (9.0, 2.2, 9.0), 0.3, rng,
                            clear_halfwidth=1.0)
    canopy = _triangle_soup(7000, (-9.0, 2.4, -9.0), (9.0, 3.4, 9.0), 0.3, rng)
    tris = np.concatenate([hedges, canopy])
    foliage = TriangleMesh(tris.reshape(-1, 3),
                           np.arange(tris.size // 3).reshape(-1, 3),
                           albedo=np.array([0.3, 0.5, 0.25]))
    camera = Camera(position=(0.0, 1.7, -6.0), forward=(0.0, -0.08, 1.0), up=(0, 1, 0),
                    fov=math.radians(60), resolution=(256, 256))
    light = PointLight((0.0, 15.0, 0.0), (700.0, 700.0, 700.0))
    return Scene(meshes=[ground, pillars, foliage], lights=[light], camera=camera)


def make_fins() -> Scene:
    """Thin fin hanging right below a point light over a floor; its crisp
    shadow is the blobbing litmus test. The fin sits close enough to the
    light that the whole fin (blob included) falls inside the near-light
    exact segment of the two-split shadow plan."""
    floor = _mesh([_quad((-5, 0, -5), (5, 0, -5), (5, 0, 5), (-5, 0, 5))],
                  (0.6, 0.6, 0.6))
    fin = _mesh([_box((-0.35, 1.82, -0.18), (0.35, 1.86, 0.18))], (0.7, 0.5, 0.3))
    camera = Camera(position=(0.0, 2.4, -2.8), forward=(0.0, -0.59, 0.81), up=(0, 1, 0),
                    fov=math.radians(60), resolution=(256, 256))
    light = PointLight((0.0, 2.2, 0.0), (14.0, 14.0, 14.0))
    return Scene(meshes=[floor, fin], lights=[light], camera=camera)


GENERATORS = {
    "cornell": make_cornell,
    "hall": make_hall,
    "fins": make_fins,
}

_RUN_DEFAULTS = {
    "cornell": {"pass": "ao", "spp": 16, "ao": {"t_ao": 10.0}},
    "hall": {"pass": "ao", "spp": 16, "ao": {"t_ao": 100.0}},
    "fins": {"pass": "shadow", "spp": 1},
}


def write_scene_files(name: str, out_dir) -> dict:
    """Write <name>.obj meshes, a .scene.json, and a ready .run.json.

    Returns the paths written, keyed by kind.
    """
    if name not in GENERATORS:
        raise KeyError(f"unknown scene {name!r}; have {sorted(GENERATORS)}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scene = GENERATORS[name]()
    mesh_entries = []
    for i, mesh in enumerate(scene.meshes):
        obj_name = f"{name}_{i}.obj"
        save_obj(mesh, out_dir / obj_name)
        mesh_entries.append({"obj": obj_name, "albedo": mesh.albedo.tolist()})
    cam = scene.camera
    doc = {
        "meshes": mesh_entries,
        "lights": [{"position": l.position.tolist(), "intensity": l.intensity.tolist()}
                   for l in scene.lights],
        "camera": {
            "position": cam.position.tolist(),
            "forward": cam.forward.tolist(),
            "up": cam.up.tolist(),
            "fov_deg": math.degrees(cam.fov),
            "resolution": list(cam.resolution),
        },
    }
    scene_path = out_dir / f"{name}.scene.json"
    scene_path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    run_doc = {
        "scene": f"{name}.scene.json",
        "split": {"mode": "combined", "multiplier": 8.0},
        "seed": 0,
        "field": {"cascade_count": 5, "cascade_resolution": 64, "finest_voxel_m": 0.1},
        "out": f"runs/{name}",
    }
    run_doc.update(_RUN_DEFAULTS[name])
    run_path = out_dir / f"{name}.run.json"
    run_path.write_text(json.dumps(run_doc, indent=2) + "\n", encoding="utf-8")
    return {"scene": scene_path, "run": run_path,
            "meshes": [out_dir / e["obj"] for e in mesh_entries]}
