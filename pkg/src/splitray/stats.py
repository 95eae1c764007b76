"""Portable work counters standing in for GPU tracing time."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class WorkStats:
    """Per-pass counters; merge with ``+=``. ``wall_time`` is informational
    only and excluded from determinism guarantees."""

    triangle_tests: int = 0
    bvh_node_visits: int = 0
    sphere_trace_steps: int = 0
    rays: int = 0
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)

    def __iadd__(self, other: "WorkStats") -> "WorkStats":
        self.triangle_tests += other.triangle_tests
        self.bvh_node_visits += other.bvh_node_visits
        self.sphere_trace_steps += other.sphere_trace_steps
        self.rays += other.rays
        self.wall_time += other.wall_time
        return self

    def work_score(self, alpha: float = 1.0) -> float:
        return self.triangle_tests + alpha * self.sphere_trace_steps

    def to_dict(self) -> dict:
        return {
            "triangle_tests": self.triangle_tests,
            "bvh_node_visits": self.bvh_node_visits,
            "sphere_trace_steps": self.sphere_trace_steps,
            "rays": self.rays,
            "wall_time": self.wall_time,
        }
