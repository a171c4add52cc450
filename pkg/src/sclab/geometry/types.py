from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

MIN_TRIANGLE_AREA = 1e-12


def as_points(points, *, name: str = "points", allow_empty: bool = True) -> np.ndarray:
    """Coerce to a C-contiguous (N, 3) float64 array with finite entries."""
    arr = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: non-finite coordinates")
    if not allow_empty and len(arr) == 0:
        raise ValueError("empty point set")
    return arr


@dataclass
class OrientedPointCloud:
    points: np.ndarray
    normals: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.points = as_points(self.points)
        self.normals = as_points(self.normals, name="normals")
        if len(self.points) != len(self.normals):
            raise ValueError("points and normals differ in length")
        if len(self.normals):
            norms = np.linalg.norm(self.normals, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-6):
                raise ValueError("normals must have unit length")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
            if len(self.labels) != len(self.points):
                raise ValueError("labels and points differ in length")

    def __len__(self) -> int:
        return len(self.points)

    def subset(self, idx) -> "OrientedPointCloud":
        labels = None if self.labels is None else self.labels[idx]
        return OrientedPointCloud(self.points[idx], self.normals[idx], labels)

    def translated(self, t) -> "OrientedPointCloud":
        return OrientedPointCloud(self.points + np.asarray(t, dtype=np.float64), self.normals.copy(),
                                  None if self.labels is None else self.labels.copy())

    @classmethod
    def empty(cls, labeled: bool = False) -> "OrientedPointCloud":
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0, dtype=np.int64) if labeled else None)


@dataclass(eq=False)
class TriangleMesh:
    """Indexed triangle mesh. ``watertight`` is derived from edge incidence."""

    vertices: np.ndarray
    triangles: np.ndarray
    watertight: bool = field(init=False)

    def __post_init__(self):
        self.vertices = as_points(self.vertices, name="vertices")
        tris = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3))
        if len(tris) and (tris.min() < 0 or tris.max() >= len(self.vertices)):
            raise ValueError("triangle index out of range")
        self.triangles = tris
        if len(tris) and np.any(self.areas <= MIN_TRIANGLE_AREA):
            bad = int(np.argmin(self.areas))
            raise ValueError(f"degenerate triangle {bad} (area {self.areas[bad]:.3e})")
        self.watertight = _edges_closed(tris)

    def __len__(self) -> int:
        return len(self.triangles)

    @cached_property
    def corners(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        v = self.vertices[self.triangles]
        return (np.ascontiguousarray(v[:, 0]), np.ascontiguousarray(v[:, 1]),
                np.ascontiguousarray(v[:, 2]))

    @cached_property
    def face_normals(self) -> np.ndarray:
        a, b, c = self.corners
        n = np.cross(b - a, c - a)
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    @cached_property
    def areas(self) -> np.ndarray:
        v = self.vertices[self.triangles]
        return 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)

    @property
    def area(self) -> float:
        return float(self.areas.sum())

    @property
    def volume(self) -> float:
        a, b, c = self.corners
        return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def transformed(self, rotation=None, translation=None, scale=None) -> "TriangleMesh":
        """Apply ``x -> R (s * x) + t`` (per-axis scale in the object frame)."""
        v = self.vertices.copy()
        if scale is not None:
            s = np.broadcast_to(np.asarray(scale, dtype=np.float64), (3,))
            v = v * s
        if rotation is not None:
            v = v @ np.asarray(rotation, dtype=np.float64).T
        if translation is not None:
            v = v + np.asarray(translation, dtype=np.float64)
        tris = self.triangles
        if scale is not None and np.prod(np.sign(s)) < 0:
            tris = tris[:, ::-1]
        return TriangleMesh(v, tris.copy())

    @staticmethod
    def concatenate(meshes: list["TriangleMesh"]) -> "TriangleMesh":
        verts, tris, off = [], [], 0
        for m in meshes:
            verts.append(m.vertices)
            tris.append(m.triangles + off)
            off += len(m.vertices)
        return TriangleMesh(np.concatenate(verts or [np.zeros((0, 3))]),
                            np.concatenate(tris or [np.zeros((0, 3), dtype=np.int64)]))


def _edges_closed(tris: np.ndarray) -> bool:
    if len(tris) == 0:
        return False
    edges = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    edges.sort(axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    return bool(np.all(counts == 2))


@dataclass
class VoxelGrid:
    origin: np.ndarray
    voxel_size: float
    dims: tuple[int, int, int]
    occupancy: np.ndarray

    def __post_init__(self):
        if not self.voxel_size > 0:
            raise ValueError("voxel_size must be positive")
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        self.dims = tuple(int(d) for d in self.dims)
        self.occupancy = np.asarray(self.occupancy, dtype=bool).reshape(self.dims)

    def centers(self) -> np.ndarray:
        ii = np.indices(self.dims).reshape(3, -1).T
        return self.origin + (ii + 0.5) * self.voxel_size

    @property
    def count(self) -> int:
        return int(self.occupancy.sum())
