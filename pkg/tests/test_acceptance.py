"""Acceptance criteria, one test per criterion, in order.

Run `pytest tests/test_acceptance.py -v -s` to see one pass line per
criterion. The quality-ordering renders (criterion 5) run at full
256x256 x 256spp and dominate the runtime.
"""

import json
import time

import numpy as np
import pytest

from splitray.exact import build_bvh, closest_batch
from splitray.field import (FieldConfig, build_cascades, fast_sweep,
                            jump_flood, roll_update)
from splitray.harness import RunConfig, run
from splitray.passes import (Accumulator, accumulate, ao_pass,
                             primary_visibility, shadow_pass)
from splitray.query import (EngineMode, Flag, RayQuery, SplitContext,
                            SplitKind, TracerKind, compute_splits)
from splitray.scene import Camera, save_obj
from splitray.scenes import make_cornell, make_fins, make_hall, write_scene_files
from splitray.stats import WorkStats
from splitray.voxelize import OccupancyGrid

from helpers import (brute_force_seed_distance, closed_box_scene,
                     oracle_closest_batch, random_unit_dirs)

BIAS = 0.15  # 1.5 x configured finest voxel (0.1 m), every mode


def _report(n: int, text: str) -> None:
    print(f"\n[ACCEPTANCE {n:02d}] PASS - {text}")


@pytest.fixture(scope="module")
def packs():
    """Scenes with BVHs and both field variants, built once."""
    out = {}
    for name, maker in (("cornell", make_cornell), ("hall", make_hall),
                        ("fins", make_fins)):
        scene = maker()
        bvh = build_bvh(scene)
        field = build_cascades(scene, scene.camera.position, FieldConfig())
        field_half = build_cascades(scene, scene.camera.position,
                                    FieldConfig(field_only_mode=True))
        out[name] = {"scene": scene, "bvh": bvh, "field": field,
                     "field_half": field_half}
    return out


def _gbuffer(pack, resolution=None):
    cam = pack["scene"].camera
    if resolution is not None and tuple(resolution) != cam.resolution:
        cam = Camera(position=cam.position, forward=cam.forward, up=cam.up,
                     fov=cam.fov, resolution=tuple(resolution))
    return primary_visibility(pack["scene"], pack["bvh"], cam)


def _ao_accumulate(gb, mode, field_, bvh, multiplier, t_ao, spp, seed=0):
    ctx = SplitContext(SplitKind.OCCLUSION, multiplier, t_ao)
    acc = Accumulator()
    stats = WorkStats()
    for frame in range(spp):
        img, st = ao_pass(gb, mode, field_, bvh, ctx, seed=seed, frame=frame,
                          normal_bias=BIAS)
        stats += st
        accumulate(acc, img)
    return acc.mean, stats


def _rmse(a, b):
    return float(np.sqrt(np.mean((a - b) ** 2)))


# --------------------------------------------------------------------------
# 1. exact tracer oracle equivalence
# --------------------------------------------------------------------------

def test_criterion_01_exact_oracle_equivalence(packs):
    t_start = time.perf_counter()
    rng = np.random.default_rng(101)
    n = 10_000
    for name in ("cornell", "hall", "fins"):
        scene = packs[name]["scene"]
        bvh = packs[name]["bvh"]
        tv = np.ascontiguousarray(scene.vertices[scene.indices])
        lo = scene.vertices.min(axis=0)
        hi = scene.vertices.max(axis=0)
        origins = rng.uniform(lo - 1.0, hi + 1.0, (n, 3))
        dirs = random_unit_dirs(n, rng)
        t0s = rng.uniform(0.0, 2.0, n)
        t1s = t0s + rng.uniform(0.0, 60.0, n)
        ours_t = np.empty(n)
        ours_slot = np.empty(n, dtype=np.int64)
        counters = np.zeros(2, dtype=np.int64)
        closest_batch(*bvh.arrays(), origins, dirs, t0s, t1s,
                      ours_t, ours_slot, counters)
        ref_t = np.empty(n)
        oracle_closest_batch(tv, origins, dirs, t0s, t1s, ref_t)
        ours_hit = ours_slot >= 0
        ref_hit = np.isfinite(ref_t)
        mismatch = ours_hit != ref_hit
        assert not mismatch.any(), f"{name}: {mismatch.sum()} hit/miss mismatches"
        both = ours_hit & ref_hit
        rel = np.abs(ours_t[both] - ref_t[both]) / np.maximum(ref_t[both], 1e-12)
        assert rel.max(initial=0.0) <= 1e-9, f"{name}: max rel dt {rel.max()}"
    elapsed = time.perf_counter() - t_start
    assert elapsed <= 60.0, f"criterion 1 took {elapsed:.1f}s (limit 60s)"
    _report(1, f"BVH closest-hit matches brute force on 3 scenes x 10k rays "
               f"({elapsed:.1f}s)")


# --------------------------------------------------------------------------
# 2. distance field correctness
# --------------------------------------------------------------------------

def test_criterion_02_distance_field_correctness():
    t_start = time.perf_counter()
    rng = np.random.default_rng(202)
    res, h = 16, 0.25
    diag = h * np.sqrt(3)
    for seeds in (1, 2, 3, 4, 6, 8, 12, 16, 24, 32):
        for _ in range(2):
            bits = np.zeros((res, res, res), np.uint8)
            flat = rng.choice(res ** 3, size=seeds, replace=False)
            bits.reshape(-1)[flat] = 1
            grid = OccupancyGrid(res, np.zeros(3), h, bits)
            _, dist = jump_flood(grid)
            swept = fast_sweep(dist, h)
            ref = brute_force_seed_distance(bits, h)
            assert np.max(np.abs(swept - ref)) <= diag, (
                f"{seeds} seeds: max err {np.max(np.abs(swept - ref))}")
            again = fast_sweep(swept, h)
            assert np.max(np.abs(again - swept)) < 1e-4 * h
    elapsed = time.perf_counter() - t_start
    assert elapsed <= 30.0, f"criterion 2 took {elapsed:.1f}s (limit 30s)"
    _report(2, f"JFA+sweep within one voxel diagonal of brute force; sweep "
               f"idempotent ({elapsed:.1f}s)")


# --------------------------------------------------------------------------
# 3. plan tiling property
# --------------------------------------------------------------------------

def test_criterion_03_plan_tiling(packs):
    t_start = time.perf_counter()
    rng = np.random.default_rng(303)
    field = packs["cornell"]["field"]
    n = 10_000
    for i in range(n):
        o = rng.uniform(-30, 30, 3)
        d = random_unit_dirs(1, rng)[0]
        t_min = rng.uniform(0, 4)
        t_max = t_min + rng.uniform(1e-9, 80)
        flag = Flag.ANY_HIT if i % 2 else Flag.CLOSEST_HIT
        kind = SplitKind.SHADOW if i % 3 else SplitKind.OCCLUSION
        q = RayQuery(o, d, t_min, t_max, flag)
        ctx = SplitContext(kind, multiplier=float(rng.uniform(0.5, 32)),
                           t_ao=t_max if kind == SplitKind.OCCLUSION else None)
        plan = compute_splits(q, field, ctx)
        plan.validate(q)  # exact tiling of [t_min, t_max] + permutation
        if flag == Flag.ANY_HIT:
            kinds = [plan.segments[j].tracer for j in plan.execution_order]
            seen_exact = False
            for k in kinds:
                if k is TracerKind.EXACT:
                    seen_exact = True
                else:
                    assert not seen_exact, "field segment after exact in any-hit order"
        else:
            assert plan.execution_order == sorted(plan.execution_order)
    elapsed = time.perf_counter() - t_start
    assert elapsed <= 5.0, f"criterion 3 took {elapsed:.1f}s (limit 5s)"
    _report(3, f"10k plans tile exactly and order per flag ({elapsed:.2f}s)")


# --------------------------------------------------------------------------
# 4. exact-segment fidelity (byte-identical near-field AO)
# --------------------------------------------------------------------------

def test_criterion_04_exact_segment_fidelity(tmp_path):
    # every occluder of every G-buffer origin lies well inside t1 = 0.8
    scene = closed_box_scene(side=0.4)
    scene.camera = Camera(position=(0, 0, 0), forward=(0, 0, 1), up=(0, 1, 0),
                          fov=np.radians(70), resolution=(64, 64))
    save_obj(scene.merged_mesh(), tmp_path / "box.obj")
    (tmp_path / "box.scene.json").write_text(json.dumps({
        "meshes": [{"obj": "box.obj", "albedo": [0.7, 0.7, 0.7]}],
        "camera": {"position": [0, 0, 0], "forward": [0, 0, 1],
                   "fov_deg": 70, "resolution": [64, 64]},
    }))
    images = {}
    for mode in (EngineMode.EXACT_ONLY, EngineMode.COMBINED):
        cfg = RunConfig(scene=tmp_path / "box.scene.json", pass_="ao",
                        mode=mode, spp=16, seed=0, t_ao=10.0,
                        out=tmp_path / mode.value)
        result = run(cfg)
        images[mode] = result.image_path.read_bytes()
    assert images[EngineMode.COMBINED] == images[EngineMode.EXACT_ONLY]
    _report(4, "combined AO byte-identical to exact-only when all occluders "
               "sit inside the near exact segment")


# --------------------------------------------------------------------------
# 5. quality ordering at full acceptance size
# --------------------------------------------------------------------------

@pytest.fixture(scope="module")
def quality_renders(packs):
    t_start = time.perf_counter()
    out = {}
    for name in ("cornell", "hall"):
        pack = packs[name]
        gb = _gbuffer(pack, (256, 256))
        renders = {}
        for mode, field_ in (
                (EngineMode.EXACT_ONLY, None),
                (EngineMode.COMBINED, pack["field"]),
                (EngineMode.FIELD_ONLY, pack["field_half"])):
            img, stats = _ao_accumulate(gb, mode, field_, pack["bvh"],
                                        multiplier=8.0, t_ao=10.0, spp=256)
            renders[mode] = (img, stats)
        out[name] = renders
    out["elapsed"] = time.perf_counter() - t_start
    return out


def test_criterion_05_quality_ordering(quality_renders):
    elapsed = quality_renders["elapsed"]
    assert elapsed <= 600.0, f"criterion 5 renders took {elapsed:.0f}s (limit 600s)"
    for name in ("cornell", "hall"):
        renders = quality_renders[name]
        ref = renders[EngineMode.EXACT_ONLY][0]
        rmse_combined = _rmse(renders[EngineMode.COMBINED][0], ref)
        rmse_field = _rmse(renders[EngineMode.FIELD_ONLY][0], ref)
        assert rmse_combined < 0.8 * rmse_field, (
            f"{name}: rmse combined {rmse_combined:.4f} vs field "
            f"{rmse_field:.4f} lacks the 20% margin")
    _report(5, f"combined beats field-only by >=20% rmse on both scenes at "
               f"256x256 x 256spp ({elapsed:.0f}s)")


# --------------------------------------------------------------------------
# 6. work ordering on the long-ray AO config
# --------------------------------------------------------------------------

def test_criterion_06_work_ordering(packs):
    pack = packs["hall"]
    gb = _gbuffer(pack, (256, 256))
    stats = {}
    for mode, field_ in (
            (EngineMode.EXACT_ONLY, None),
            (EngineMode.COMBINED, pack["field"]),
            (EngineMode.FIELD_ONLY, pack["field_half"])):
        _, st = _ao_accumulate(gb, mode, field_, pack["bvh"],
                               multiplier=8.0, t_ao=100.0, spp=4)
        stats[mode] = st
    tri_e = stats[EngineMode.EXACT_ONLY].triangle_tests
    tri_c = stats[EngineMode.COMBINED].triangle_tests
    assert tri_c <= 0.5 * tri_e, f"triangle tests {tri_c} > 0.5 x {tri_e}"
    scores = {m: s.work_score(alpha=1.0) for m, s in stats.items()}
    assert scores[EngineMode.EXACT_ONLY] > scores[EngineMode.COMBINED] \
        > scores[EngineMode.FIELD_ONLY], f"work scores out of order: {scores}"
    assert stats[EngineMode.EXACT_ONLY].sphere_trace_steps == 0
    assert stats[EngineMode.FIELD_ONLY].triangle_tests == 0
    _report(6, f"t_ao=100 work: tri ratio {tri_c / tri_e:.2f} <= 0.5 and "
               f"exact {scores[EngineMode.EXACT_ONLY]:.2g} > combined "
               f"{scores[EngineMode.COMBINED]:.2g} > field "
               f"{scores[EngineMode.FIELD_ONLY]:.2g}")


# --------------------------------------------------------------------------
# 7. quality knob monotonicity
# --------------------------------------------------------------------------

def test_criterion_07_multiplier_monotonicity(packs):
    for name in ("cornell", "hall"):
        pack = packs[name]
        gb = _gbuffer(pack, (128, 128))
        ref, _ = _ao_accumulate(gb, EngineMode.EXACT_ONLY, None, pack["bvh"],
                                multiplier=8.0, t_ao=10.0, spp=64)
        errors = []
        for mult in (2.0, 8.0, 32.0):
            img, _ = _ao_accumulate(gb, EngineMode.COMBINED, pack["field"],
                                    pack["bvh"], multiplier=mult, t_ao=10.0,
                                    spp=64)
            errors.append(_rmse(img, ref))
        assert errors[0] >= errors[1] >= errors[2], (
            f"{name}: rmse not non-increasing over multipliers: {errors}")
    _report(7, "rmse vs exact is non-increasing over multipliers {2, 8, 32}")


# --------------------------------------------------------------------------
# 8. rolling update equivalence
# --------------------------------------------------------------------------

def test_criterion_08_rolling_equivalence(packs):
    t_start = time.perf_counter()
    scene = packs["cornell"]["scene"]
    start = scene.camera.position.copy()
    field = build_cascades(scene, start, FieldConfig())
    pos = start.copy()
    steps = [np.array([0.1, 0.0, 0.0])] * 5 + [np.array([0.0, 0.0, 0.1])] * 5
    for step in steps:
        pos = pos + step
        roll_update(field, pos, scene)
    rebuilt = build_cascades(scene, pos, FieldConfig())
    for rolled, fresh in zip(field.cascades, rebuilt.cascades):
        np.testing.assert_allclose(rolled.center, fresh.center)
        np.testing.assert_array_equal(rolled.occupancy.bits, fresh.occupancy.bits)
        finite = np.isfinite(fresh.distance)
        np.testing.assert_array_equal(np.isfinite(rolled.distance), finite)
        diff = np.abs(rolled.distance[finite] - fresh.distance[finite])
        assert diff.max(initial=0.0) <= 1e-3 * rolled.voxel_size
    elapsed = time.perf_counter() - t_start
    assert elapsed <= 60.0, f"criterion 8 took {elapsed:.1f}s (limit 60s)"
    _report(8, f"10 single-voxel rolls match a from-scratch rebuild "
               f"({elapsed:.1f}s)")


# --------------------------------------------------------------------------
# 9. shadow two-split behavior
# --------------------------------------------------------------------------

def test_criterion_09_shadow_two_split(packs):
    pack = packs["fins"]
    gb = _gbuffer(pack)
    ctx = SplitContext(SplitKind.SHADOW, 8.0)
    images = {}
    for mode, field_ in (
            (EngineMode.EXACT_ONLY, None),
            (EngineMode.COMBINED, pack["field"]),
            (EngineMode.FIELD_ONLY, pack["field_half"])):
        img, _ = shadow_pass(gb, pack["scene"].lights, mode, field_,
                             pack["bvh"], ctx, normal_bias=BIAS)
        images[mode] = img
    exact = images[EngineMode.EXACT_ONLY]
    rmse_combined = _rmse(images[EngineMode.COMBINED], exact)
    rmse_field = _rmse(images[EngineMode.FIELD_ONLY], exact)
    assert rmse_field >= 2.0 * rmse_combined, (
        f"field rmse {rmse_field:.5f} < 2 x combined {rmse_combined:.5f}")

    # every pixel where combined differs lies within one pixel of a shadow
    # boundary in the exact image
    lum = exact.mean(axis=2)
    edge = np.zeros_like(lum, dtype=bool)
    thresh = 0.05 * max(lum.max(), 1e-9)
    edge[1:, :] |= np.abs(np.diff(lum, axis=0)) > thresh
    edge[:-1, :] |= np.abs(np.diff(lum, axis=0)) > thresh
    edge[:, 1:] |= np.abs(np.diff(lum, axis=1)) > thresh
    edge[:, :-1] |= np.abs(np.diff(lum, axis=1)) > thresh
    dilated = edge.copy()
    dilated[1:, :] |= edge[:-1, :]
    dilated[:-1, :] |= edge[1:, :]
    dilated[:, 1:] |= edge[:, :-1]
    dilated[:, :-1] |= edge[:, 1:]
    differs = np.abs(images[EngineMode.COMBINED] - exact).max(axis=2) > 1.0 / 255.0
    off_boundary = differs & ~dilated
    assert not off_boundary.any(), (
        f"{off_boundary.sum()} combined-mode pixels differ away from "
        "exact shadow boundaries")
    _report(9, f"combined shadow within 1px of exact boundaries "
               f"(rmse {rmse_combined:.2g} vs field-only {rmse_field:.2g})")


# --------------------------------------------------------------------------
# 10. determinism end to end
# --------------------------------------------------------------------------

def test_criterion_10_determinism(tmp_path):
    write_scene_files("fins", tmp_path)
    write_scene_files("cornell", tmp_path)
    configs = [
        RunConfig.from_file(tmp_path / "cornell.run.json", spp=4,
                            resolution=(96, 96), out=tmp_path / "c"),
        RunConfig.from_file(tmp_path / "fins.run.json",
                            mode=EngineMode.FIELD_ONLY,
                            resolution=(96, 96), out=tmp_path / "f"),
    ]
    for cfg in configs:
        first = run(cfg)
        image1 = first.image_path.read_bytes()
        stats1 = [json.loads(l) for l in first.stats_path.read_text().splitlines()]
        second = run(cfg)
        assert second.image_path.read_bytes() == image1
        stats2 = [json.loads(l) for l in second.stats_path.read_text().splitlines()]
        for a, b in zip(stats1, stats2):
            a.pop("wall_time")
            b.pop("wall_time")
            assert a == b
    _report(10, "repeated runs byte-identical (images and stats minus wall_time)")
