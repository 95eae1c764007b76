"""Triangle scenes: OBJ meshes, constant-albedo materials, lights, camera.

Scene units are meters throughout, so voxel sizes like 0.1 m map directly
onto scene geometry.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, EmptyMeshError, ParseError
from .geom import Aabb, as_vec3, normalize

DEGENERATE_AREA_TOL = 1e-12


@dataclass
class TriangleMesh:
    """Indexed triangle mesh with one constant albedo for the whole mesh.

    ``normals`` are optional per-vertex unit vectors (from OBJ ``vn``
    records); ``face_normals`` are always present and are what the tracers
    report. Degenerate triangles are dropped at construction and counted in
    ``degenerate_dropped``.
    """

    vertices: np.ndarray              # (V, 3) float64
    indices: np.ndarray               # (T, 3) int64
    normals: np.ndarray | None = None  # (V, 3) float64 or None
    albedo: np.ndarray = field(default_factory=lambda: np.array([0.8, 0.8, 0.8]))
    face_normals: np.ndarray = field(init=False)
    degenerate_dropped: int = 0

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        self.albedo = np.asarray(self.albedo, dtype=np.float64)
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= len(self.vertices)):
            raise ValueError("triangle index out of range")
        kept, dropped, fn = _drop_degenerate(self.vertices, self.indices)
        self.indices = kept
        self.degenerate_dropped += dropped
        self.face_normals = fn

    @property
    def triangle_count(self) -> int:
        return len(self.indices)

    def triangle_vertices(self) -> np.ndarray:
        """Vertex positions per triangle, shape (T, 3, 3)."""
        return self.vertices[self.indices]


def _drop_degenerate(vertices, indices):
    if len(indices) == 0:
        return indices.reshape(0, 3), 0, np.zeros((0, 3))
    tri = vertices[indices]
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    area2 = np.linalg.norm(cross, axis=1)
    keep = area2 > 2.0 * DEGENERATE_AREA_TOL
    fn = cross[keep] / area2[keep][:, None]
    return indices[keep], int(np.count_nonzero(~keep)), fn


@dataclass
class Camera:
    """Pinhole camera. ``fov`` is the vertical field of view in radians."""

    position: np.ndarray
    forward: np.ndarray
    up: np.ndarray
    fov: float
    resolution: tuple[int, int]  # (width, height)

    def __post_init__(self):
        self.position = as_vec3(self.position)
        self.forward = normalize(self.forward)
        up = as_vec3(self.up)
        if np.linalg.norm(np.cross(self.forward, up)) < 1e-12:
            raise ValueError("camera forward and up are parallel")
        if not (0.0 < self.fov < math.pi):
            raise ValueError("fov must be in (0, pi)")
        right = normalize(np.cross(self.forward, up))
        self.right = right
        self.up = normalize(np.cross(right, self.forward))

    def ray_direction(self, px: float, py: float) -> np.ndarray:
        """Unit direction through pixel center (px, py); row 0 is the top."""
        w, h = self.resolution
        tanv = math.tan(self.fov / 2.0)
        ndc_x = (2.0 * (px + 0.5) / w - 1.0) * tanv * (w / h)
        ndc_y = (1.0 - 2.0 * (py + 0.5) / h) * tanv
        return normalize(self.forward + ndc_x * self.right + ndc_y * self.up)


@dataclass
class PointLight:
    position: np.ndarray
    intensity: np.ndarray  # RGB, >= 0

    def __post_init__(self):
        self.position = as_vec3(self.position)
        self.intensity = np.asarray(self.intensity, dtype=np.float64)
        if not np.all(np.isfinite(self.intensity)) or np.any(self.intensity < 0):
            raise ValueError("light intensity must be finite and nonnegative")


@dataclass
class Scene:
    """A list of meshes plus lights and a camera, flattened for tracing."""

    meshes: list[TriangleMesh]
    lights: list[PointLight] = field(default_factory=list)
    camera: Camera | None = None

    def __post_init__(self):
        self._flatten()

    def _flatten(self):
        verts = []
        faces = []
        mesh_ids = []
        offset = 0
        for mi, m in enumerate(self.meshes):
            verts.append(m.vertices)
            faces.append(m.indices + offset)
            mesh_ids.append(np.full(len(m.indices), mi, dtype=np.int64))
            offset += len(m.vertices)
        if verts:
            self.vertices = np.concatenate(verts)
            self.indices = np.concatenate(faces)
            self.triangle_mesh_id = np.concatenate(mesh_ids)
        else:
            self.vertices = np.zeros((0, 3))
            self.indices = np.zeros((0, 3), dtype=np.int64)
            self.triangle_mesh_id = np.zeros(0, dtype=np.int64)
        self.albedos = (
            np.stack([m.albedo for m in self.meshes])
            if self.meshes else np.zeros((0, 3))
        )

    @property
    def triangle_count(self) -> int:
        return len(self.indices)

    def merged_mesh(self) -> TriangleMesh:
        """All meshes as one TriangleMesh (albedo of the first, or gray)."""
        if self.triangle_count == 0:
            raise EmptyMeshError("scene has no triangles")
        albedo = self.meshes[0].albedo if self.meshes else np.array([0.8, 0.8, 0.8])
        return TriangleMesh(self.vertices, self.indices, albedo=albedo)


def load_obj(path, albedo=(0.8, 0.8, 0.8)) -> TriangleMesh:
    """Load a Wavefront OBJ file (v, vn, f records; the rest is ignored).

    Polygon faces are fan-triangulated from their first vertex. Raises
    ParseError with a line number on malformed records or out-of-range
    indices, and EmptyMeshError if no valid triangle survives.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    vertices: list[list[float]] = []
    vnormals: list[list[float]] = []
    faces: list[tuple[int, int, int]] = []
    face_normal_idx: list[tuple[int, int, int]] = []

    def resolve(idx: int, count: int, line_no: int, what: str) -> int:
        j = idx - 1 if idx > 0 else count + idx
        if not (0 <= j < count):
            raise ParseError(path, line_no, f"{what} index {idx} out of range (have {count})")
        return j

    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise ParseError(path, line_no, "vertex needs 3 coordinates")
                try:
                    vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
                except ValueError as exc:
                    raise ParseError(path, line_no, f"bad vertex: {exc}") from None
            elif tag == "vn":
                if len(parts) < 4:
                    raise ParseError(path, line_no, "normal needs 3 coordinates")
                try:
                    vnormals.append([float(parts[1]), float(parts[2]), float(parts[3])])
                except ValueError as exc:
                    raise ParseError(path, line_no, f"bad normal: {exc}") from None
            elif tag == "f":
                if len(parts) < 4:
                    raise ParseError(path, line_no, "face needs at least 3 vertices")
                vi = []
                ni = []
                for token in parts[1:]:
                    fields = token.split("/")
                    try:
                        v = int(fields[0])
                    except ValueError:
                        raise ParseError(path, line_no, f"bad face token {token!r}") from None
                    vi.append(resolve(v, len(vertices), line_no, "vertex"))
                    if len(fields) >= 3 and fields[2]:
                        ni.append(resolve(int(fields[2]), len(vnormals), line_no, "normal"))
                # fan triangulation from the first vertex
                for k in range(1, len(vi) - 1):
                    faces.append((vi[0], vi[k], vi[k + 1]))
                    if len(ni) == len(vi):
                        face_normal_idx.append((ni[0], ni[k], ni[k + 1]))

    if not faces:
        raise EmptyMeshError(f"{path}: no triangles")
    verts = np.asarray(vertices, dtype=np.float64)
    idx = np.asarray(faces, dtype=np.int64)
    normals = None
    if len(face_normal_idx) == len(faces) and vnormals:
        # scatter per-corner normals to per-vertex slots (last write wins)
        normals = np.zeros_like(verts)
        nsrc = np.asarray(vnormals, dtype=np.float64)
        for f, nf in zip(faces, face_normal_idx):
            for v, n in zip(f, nf):
                normals[v] = nsrc[n]
        lens = np.linalg.norm(normals, axis=1)
        lens[lens == 0] = 1.0
        normals = normals / lens[:, None]
    mesh = TriangleMesh(verts, idx, normals=normals, albedo=np.asarray(albedo, dtype=np.float64))
    if mesh.triangle_count == 0:
        raise EmptyMeshError(f"{path}: all triangles degenerate")
    return mesh


def save_obj(mesh: TriangleMesh, path) -> None:
    """Write vertices and faces back out; round-trips the triangle set."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        if mesh.normals is not None:
            for n in mesh.normals:
                fh.write(f"vn {n[0]:.17g} {n[1]:.17g} {n[2]:.17g}\n")
            for f in mesh.indices:
                fh.write(f"f {f[0]+1}//{f[0]+1} {f[1]+1}//{f[1]+1} {f[2]+1}//{f[2]+1}\n")
        else:
            for f in mesh.indices:
                fh.write(f"f {f[0]+1} {f[1]+1} {f[2]+1}\n")


def compute_bounds(mesh: TriangleMesh) -> Aabb:
    """Minimal axis-aligned box over all vertices referenced by triangles."""
    if mesh.triangle_count == 0:
        raise EmptyMeshError("cannot bound an empty mesh")
    used = mesh.vertices[np.unique(mesh.indices)]
    return Aabb(used.min(axis=0), used.max(axis=0))


def scene_bounds(scene: Scene) -> Aabb:
    if scene.triangle_count == 0:
        raise EmptyMeshError("cannot bound an empty scene")
    used = scene.vertices[np.unique(scene.indices)]
    return Aabb(used.min(axis=0), used.max(axis=0))


def load_scene(path) -> Scene:
    """Load a JSON scene description naming meshes, albedos, lights, camera.

    Mesh paths are resolved relative to the scene file's directory.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"scene file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.lineno, exc.msg) from None
    base = path.parent
    meshes = []
    for entry in doc.get("meshes", []):
        obj_path = base / entry["obj"]
        if not obj_path.exists():
            raise ConfigError(f"mesh file not found: {obj_path}")
        meshes.append(load_obj(obj_path, albedo=entry.get("albedo", (0.8, 0.8, 0.8))))
    lights = [
        PointLight(np.asarray(l["position"]), np.asarray(l["intensity"]))
        for l in doc.get("lights", [])
    ]
    camera = None
    if "camera" in doc:
        c = doc["camera"]
        camera = Camera(
            position=np.asarray(c["position"]),
            forward=np.asarray(c["forward"]),
            up=np.asarray(c.get("up", (0.0, 1.0, 0.0))),
            fov=math.radians(float(c.get("fov_deg", 60.0))),
            resolution=tuple(c.get("resolution", (256, 256))),
        )
    return Scene(meshes=meshes, lights=lights, camera=camera)


def save_scene(scene_doc: dict, path) -> None:
    Path(path).write_text(json.dumps(scene_doc, indent=2) + "\n", encoding="utf-8")
