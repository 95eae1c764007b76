"""splitray: hybrid ray tracing that splits each query's t-interval between
an exact BVH tracer and a cascaded distance-field sphere tracer."""

from .errors import (ConfigError, DimensionMismatchError,
                     DisplacementTooLargeError, EmptyMeshError, ParseError,
                     PlanMismatchError, SplitrayError)
from .exact import (Bvh, HitResult, TracerKind, build_bvh, intersect_any,
                    intersect_closest, ray_triangle)
from .field import (Cascade, CascadedDistanceField, FieldConfig,
                    build_cascades, cascade_index_at, fast_sweep, gradient,
                    jump_flood, roll_update, sample, voxel_size_at)
from .geom import Aabb
from .harness import RunConfig, compare, image_error, render, run
from .marcher import SphereTraceParams, sphere_trace
from .passes import (Accumulator, GBuffer, accumulate, ao_pass,
                     hemisphere_sample, primary_visibility, shadow_pass)
from .ppm import read_image, write_image
from .query import (EngineMode, Flag, RayQuery, Segment, SplitContext,
                    SplitKind, SubQueryPlan, compute_splits, trace_combined,
                    trace_pure, trace_query)
from .scene import (Camera, PointLight, Scene, TriangleMesh, compute_bounds,
                    load_obj, load_scene, save_obj)
from .stats import WorkStats
from .voxelize import OccupancyGrid, triangle_box_overlap, voxelize

__version__ = "0.1.0"
