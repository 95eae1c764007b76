"""Run orchestration: configuration, the three-mode comparison driver,
image metrics, and stats reporting."""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionMismatchError
from .exact import Bvh, build_bvh
from .field import CascadedDistanceField, FieldConfig, build_cascades
from .marcher import SphereTraceParams
from .passes import (Accumulator, accumulate, ao_pass, primary_visibility,
                     shadow_pass)
from .ppm import read_image, write_image
from .query import EngineMode, SplitContext, SplitKind
from .scene import Camera, Scene, load_scene
from .stats import WorkStats

PASSES = ("ao", "shadow")


@dataclass
class RunConfig:
    """Everything one render run needs; mirrors the JSON config schema."""

    scene: Path
    pass_: str = "ao"
    mode: EngineMode = EngineMode.COMBINED
    spp: int = 16
    seed: int = 0
    multiplier: float = 8.0
    t_ao: float = 10.0
    light_epsilon: float = 1e-3
    field: FieldConfig = dc_field(default_factory=FieldConfig)
    trace: SphereTraceParams = dc_field(default_factory=SphereTraceParams)
    normal_bias_factor: float = 1.5
    ao_distance_falloff: bool = False
    resolution: tuple[int, int] | None = None
    out: Path = Path("runs/out")
    reference: Path | None = None

    def __post_init__(self):
        self.scene = Path(self.scene)
        self.out = Path(self.out)
        if self.pass_ not in PASSES:
            raise ConfigError(f"pass must be one of {PASSES}, got {self.pass_!r}")
        if self.spp < 1:
            raise ConfigError("spp must be >= 1")
        if not self.scene.exists():
            raise ConfigError(f"scene file not found: {self.scene}")
        if self.reference is not None:
            self.reference = Path(self.reference)
            if not self.reference.exists():
                raise ConfigError(f"reference image not found: {self.reference}")

    @property
    def normal_bias(self) -> float:
        """World-space origin offset; uses the configured base voxel size for
        every mode so cross-mode images stay comparable."""
        return self.normal_bias_factor * self.field.finest_voxel_m

    @classmethod
    def from_file(cls, path, **overrides) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        doc = json.loads(path.read_text(encoding="utf-8"))
        base = path.parent
        split = doc.get("split", {})
        render = doc.get("render", {})
        kwargs = {
            "scene": base / doc["scene"],
            "pass_": doc.get("pass", "ao"),
            "mode": EngineMode(split.get("mode", "combined")),
            "spp": int(doc.get("spp", 16)),
            "seed": int(doc.get("seed", 0)),
            "multiplier": float(split.get("multiplier", 8.0)),
            "t_ao": float(doc.get("ao", {}).get("t_ao", 10.0)),
            "light_epsilon": float(doc.get("shadow", {}).get("light_epsilon", 1e-3)),
            "field": FieldConfig.from_dict(doc.get("field", {})),
            "trace": SphereTraceParams.from_dict(doc.get("sphere_trace", {})),
            "normal_bias_factor": float(render.get("normal_bias_factor", 1.5)),
            "ao_distance_falloff": bool(render.get("ao_distance_falloff", False)),
            "out": base / doc.get("out", "runs/out"),
        }
        if "resolution" in doc:
            kwargs["resolution"] = tuple(doc["resolution"])
        if doc.get("reference"):
            kwargs["reference"] = base / doc["reference"]
        for key, value in overrides.items():
            if value is None:
                continue
            kwargs[key] = value
        return cls(**kwargs)

    def replaced(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class RunResult:
    image: np.ndarray
    stats: WorkStats
    primary_stats: WorkStats
    image_path: Path
    stats_path: Path
    metrics: dict | None = None


def image_error(a: np.ndarray, b: np.ndarray) -> dict:
    """Channelwise error metrics over all pixels: rmse, mae, max_abs."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"image shapes differ: {a.shape} vs {b.shape}")
    diff = a - b
    return {
        "rmse": float(np.sqrt(np.mean(diff ** 2))),
        "mae": float(np.mean(np.abs(diff))),
        "max_abs": float(np.max(np.abs(diff))) if diff.size else 0.0,
    }


def _effective_camera(scene: Scene, config: RunConfig) -> Camera:
    cam = scene.camera
    if cam is None:
        raise ConfigError(f"scene {config.scene} has no camera")
    if config.resolution is not None and tuple(config.resolution) != cam.resolution:
        cam = Camera(position=cam.position, forward=cam.forward, up=cam.up,
                     fov=cam.fov, resolution=tuple(config.resolution))
    return cam


def build_engine(scene: Scene, config: RunConfig):
    """BVH always; a distance field only for the modes that march it."""
    bvh = build_bvh(scene)
    field_ = None
    if config.mode in (EngineMode.COMBINED, EngineMode.FIELD_ONLY):
        fc = dataclasses.replace(config.field,
                                 field_only_mode=config.mode == EngineMode.FIELD_ONLY)
        cam = scene.camera
        center = cam.position if cam is not None else np.zeros(3)
        field_ = build_cascades(scene, center, fc)
    return bvh, field_


def render(config: RunConfig, scene: Scene | None = None,
           bvh: Bvh | None = None, field_: CascadedDistanceField | None = None):
    """Render the configured pass; returns (image, pass stats, primary stats).

    The shadow pass is deterministic (point lights, no sampling), so it is
    rendered once regardless of spp.
    """
    if scene is None:
        scene = load_scene(config.scene)
    if bvh is None:
        bvh, field_ = build_engine(scene, config)
    camera = _effective_camera(scene, config)
    primary_stats = WorkStats()
    t0 = time.perf_counter()
    gbuffer = primary_visibility(scene, bvh, camera, primary_stats)
    primary_stats.wall_time = time.perf_counter() - t0

    stats = WorkStats()
    acc = Accumulator()
    t0 = time.perf_counter()
    if config.pass_ == "ao":
        ctx = SplitContext(kind=SplitKind.OCCLUSION, multiplier=config.multiplier,
                           t_ao=config.t_ao)
        for frame in range(config.spp):
            img, fstats = ao_pass(gbuffer, config.mode, field_, bvh, ctx,
                                  seed=config.seed, frame=frame,
                                  normal_bias=config.normal_bias,
                                  trace=config.trace,
                                  distance_falloff=config.ao_distance_falloff)
            stats += fstats
            accumulate(acc, img)
    else:
        ctx = SplitContext(kind=SplitKind.SHADOW, multiplier=config.multiplier)
        img, fstats = shadow_pass(gbuffer, scene.lights, config.mode, field_, bvh,
                                  ctx, normal_bias=config.normal_bias,
                                  light_epsilon=config.light_epsilon,
                                  trace=config.trace)
        stats += fstats
        accumulate(acc, img)
    stats.wall_time = time.perf_counter() - t0
    return acc.mean, stats, primary_stats


def run(config: RunConfig, scene: Scene | None = None) -> RunResult:
    """Render per config and write image, stats, and optional error outputs."""
    image, stats, primary_stats = render(config, scene=scene)
    out = config.out
    out.mkdir(parents=True, exist_ok=True)
    image_path = write_image(out / f"{config.pass_}_{config.mode.value}.ppm", image)
    stats_path = out / f"stats_{config.pass_}_{config.mode.value}.jsonl"
    records = [
        {"pass": "primary", "mode": config.mode.value, **primary_stats.to_dict()},
        {"pass": config.pass_, "mode": config.mode.value, "spp": config.spp,
         "seed": config.seed, "multiplier": config.multiplier, **stats.to_dict()},
    ]
    with open(stats_path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    metrics = None
    if config.reference is not None:
        ref = read_image(config.reference)
        ours = read_image(image_path)
        metrics = image_error(ours, ref)
        (out / "metrics.json").write_text(json.dumps(metrics, indent=2) + "\n")
        write_image(out / "error.ppm", np.abs(ours - ref))
    return RunResult(image=image, stats=stats, primary_stats=primary_stats,
                     image_path=image_path, stats_path=stats_path, metrics=metrics)


def compare(config: RunConfig) -> dict:
    """Run all three engine modes on one config and tabulate quality vs work.

    exact_only is the reference for the error columns. Writes compare.csv
    and compare.md next to the per-mode outputs; returns the table rows.
    """
    scene = load_scene(config.scene)
    rows = []
    images = {}
    for mode in (EngineMode.EXACT_ONLY, EngineMode.COMBINED, EngineMode.FIELD_ONLY):
        mode_config = config.replaced(mode=mode)
        result = run(mode_config, scene=scene)
        images[mode] = result.image
        rows.append({
            "mode": mode.value,
            "rays": result.stats.rays,
            "triangle_tests": result.stats.triangle_tests,
            "bvh_node_visits": result.stats.bvh_node_visits,
            "sphere_trace_steps": result.stats.sphere_trace_steps,
            "work_score": result.stats.work_score(),
            "wall_time": result.stats.wall_time,
        })
    ref = images[EngineMode.EXACT_ONLY]
    for row in rows:
        err = image_error(images[EngineMode(row["mode"])], ref)
        row["rmse_vs_exact"] = err["rmse"]
        row["mae_vs_exact"] = err["mae"]

    out = config.out
    out.mkdir(parents=True, exist_ok=True)
    cols = ["mode", "rays", "triangle_tests", "bvh_node_visits",
            "sphere_trace_steps", "work_score", "rmse_vs_exact", "mae_vs_exact"]
    with open(out / "compare.csv", "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) for c in cols) + "\n")
    with open(out / "compare.md", "w", encoding="utf-8") as fh:
        fh.write("| " + " | ".join(cols) + " |\n")
        fh.write("|" + "---|" * len(cols) + "\n")
        for row in rows:
            fh.write("| " + " | ".join(_fmt(row[c]) for c in cols) + " |\n")
    return {"rows": rows, "out": out}


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)
