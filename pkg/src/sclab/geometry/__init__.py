"""Spatial kernels: k-d tree, triangle BVH, signed distance, voxelization, sampling."""
from sclab.geometry.bvh import MeshBVH, RayHit, ray_cast, signed_distance
from sclab.geometry.kdtree import KDTree, nearest_neighbor
from sclab.geometry.sampling import farthest_point_sample, grid_subsample, sample_surface
from sclab.geometry.types import OrientedPointCloud, TriangleMesh, VoxelGrid, as_points
from sclab.geometry.voxel import voxelize_solid

__all__ = [
    "KDTree", "MeshBVH", "OrientedPointCloud", "RayHit", "TriangleMesh", "VoxelGrid",
    "as_points", "farthest_point_sample", "grid_subsample", "nearest_neighbor", "ray_cast",
    "sample_surface", "signed_distance", "voxelize_solid",
]
