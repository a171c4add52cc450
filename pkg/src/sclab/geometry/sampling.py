from __future__ import annotations

import numpy as np

from sclab.geometry.types import OrientedPointCloud, TriangleMesh, as_points


def sample_surface(mesh: TriangleMesh, n: int, rng_seed: int = 0, return_faces: bool = False):
    """Area-weighted uniform samples on the mesh surface.

    Faces are drawn with probability proportional to area, then a point is
    drawn uniformly inside the face with the square-root barycentric trick.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    areas = mesh.areas if len(mesh) else np.zeros(0)
    total = float(areas.sum())
    if not total > 0:
        raise ValueError("mesh has zero surface area")
    rng = np.random.default_rng(rng_seed)
    faces = rng.choice(len(mesh), size=n, p=areas / total)
    r1, r2 = rng.random(n), rng.random(n)
    s = np.sqrt(r1)
    wa, wb, wc = 1.0 - s, s * (1.0 - r2), s * r2
    a, b, c = mesh.corners
    pts = wa[:, None] * a[faces] + wb[:, None] * b[faces] + wc[:, None] * c[faces]
    if return_faces:
        return pts, faces
    return pts


def grid_cells(points, resolution: float) -> np.ndarray:
    """Integer cell coordinates on the world lattice of spacing ``resolution``."""
    return np.floor(as_points(points) / resolution).astype(np.int64)


def grid_subsample(cloud: OrientedPointCloud, resolution: float) -> OrientedPointCloud:
    """Keep one input point per occupied lattice cell.

    The kept point is the one nearest the cell's geometric center (lowest
    index on ties), so normals and labels carry over untouched. Cells live on
    the world lattice ``floor(p / resolution)``, which makes the operation
    idempotent.
    """
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    if len(cloud) == 0:
        return cloud.subset(np.zeros(0, dtype=np.int64))
    keep = grid_subsample_indices(cloud.points, resolution)
    return cloud.subset(keep)


def grid_subsample_indices(points, resolution: float) -> np.ndarray:
    pts = as_points(points)
    cells = grid_cells(pts, resolution)
    centers = (cells + 0.5) * resolution
    d2 = ((pts - centers) ** 2).sum(axis=1)
    # sort by cell, then distance, then index; first of each cell wins
    order = np.lexsort((np.arange(len(pts)), d2, cells[:, 2], cells[:, 1], cells[:, 0]))
    sc = cells[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = np.any(sc[1:] != sc[:-1], axis=1)
    return np.sort(order[first])


def farthest_point_sample(points, m: int, start: int = 0) -> np.ndarray:
    """Greedy farthest-point subset of size ``m``; ties go to the lowest index."""
    pts = as_points(points)
    n = len(pts)
    if m > n:
        raise ValueError(f"cannot pick {m} of {n} points")
    chosen = np.empty(m, dtype=np.int64)
    chosen[0] = start
    d2 = ((pts - pts[start]) ** 2).sum(axis=1)
    for i in range(1, m):
        nxt = int(np.argmax(d2))
        chosen[i] = nxt
        d2 = np.minimum(d2, ((pts - pts[nxt]) ** 2).sum(axis=1))
    return chosen
