from __future__ import annotations

import numpy as np

from sclab.geometry.bvh import MeshBVH, signed_distance
from sclab.geometry.types import TriangleMesh, VoxelGrid


def lattice_for_bounds(lo, hi, voxel_size: float) -> tuple[np.ndarray, tuple[int, int, int]]:
    """Grid covering [lo, hi] padded by one voxel, anchored at ``lo - voxel_size``."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    origin = lo - voxel_size
    dims = np.ceil((hi + voxel_size - origin) / voxel_size - 1e-9).astype(int)
    return origin, tuple(int(d) for d in np.maximum(dims, 1))


def voxelize_solid(mesh: TriangleMesh, voxel_size: float, origin=None, dims=None,
                   bvh: MeshBVH | None = None) -> VoxelGrid:
    """Occupancy grid where a voxel is filled iff its center has SDF <= 0.

    ``origin``/``dims`` pin the lattice (used to put two meshes on a shared
    grid); by default the grid covers the mesh bounds plus one voxel.
    """
    if not voxel_size > 0:
        raise ValueError("voxel_size must be positive")
    if not mesh.watertight:
        raise ValueError("sign undefined for open mesh")
    if origin is None or dims is None:
        origin, dims = lattice_for_bounds(*mesh.bounds, voxel_size)
    grid = VoxelGrid(origin, voxel_size, dims, np.zeros(dims, dtype=bool))
    centers = grid.centers()
    lo, hi = mesh.bounds
    # centers outside the mesh AABB cannot be inside the solid
    cand = np.flatnonzero(np.all((centers >= lo) & (centers <= hi), axis=1))
    if len(cand):
        bvh = bvh or MeshBVH(mesh)
        sdf = signed_distance(bvh, centers[cand])
        occ = grid.occupancy.reshape(-1)
        occ[cand[sdf <= 0]] = True
    return grid
