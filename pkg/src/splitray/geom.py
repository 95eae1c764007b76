"""Small geometric primitives used across modules."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def as_vec3(x) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.shape != (3,):
        raise ValueError(f"expected 3-vector, got shape {v.shape}")
    return v


def normalize(v) -> np.ndarray:
    v = as_vec3(v)
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise ValueError("cannot normalize zero vector")
    return v / n


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned box, closed on all faces."""

    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "min", as_vec3(self.min))
        object.__setattr__(self, "max", as_vec3(self.max))

    def contains(self, p) -> bool:
        p = as_vec3(p)
        return bool(np.all(p >= self.min) and np.all(p <= self.max))

    def union(self, other: "Aabb") -> "Aabb":
        return Aabb(np.minimum(self.min, other.min), np.maximum(self.max, other.max))

    @property
    def extent(self) -> np.ndarray:
        return self.max - self.min
