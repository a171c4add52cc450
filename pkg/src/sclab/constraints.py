"""Sparse free-space / occluded-space scene constraints and normal utilities."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from sclab.geometry.io import read_point_cloud, write_point_cloud
from sclab.geometry.kdtree import KDTree
from sclab.geometry.sampling import grid_subsample_indices
from sclab.geometry.types import OrientedPointCloud, as_points

DEFAULT_DELTA = 0.02
DEFAULT_RESOLUTION = 0.10


@dataclass
class ConstraintSet:
    free_points: np.ndarray
    occ_points: np.ndarray
    delta: float = DEFAULT_DELTA
    resolution: float = DEFAULT_RESOLUTION

    def __post_init__(self):
        self.free_points = as_points(self.free_points)
        self.occ_points = as_points(self.occ_points)
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")

    def __len__(self) -> int:
        return len(self.free_points) + len(self.occ_points)

    def translated(self, t) -> "ConstraintSet":
        t = np.asarray(t, dtype=np.float64)
        return ConstraintSet(self.free_points + t, self.occ_points + t, self.delta, self.resolution)

    def relative_to(self, origin) -> "ConstraintSet":
        return self.translated(-np.asarray(origin, dtype=np.float64))

    def near(self, center, radius: float) -> "ConstraintSet":
        """Constraint points within ``radius`` of ``center`` (per-object crop)."""
        c = np.asarray(center, dtype=np.float64)
        keep_f = np.linalg.norm(self.free_points - c, axis=1) <= radius
        keep_o = np.linalg.norm(self.occ_points - c, axis=1) <= radius
        return ConstraintSet(self.free_points[keep_f], self.occ_points[keep_o], self.delta, self.resolution)

    @classmethod
    def empty(cls) -> "ConstraintSet":
        return cls(np.zeros((0, 3)), np.zeros((0, 3)))

    def save(self, out_dir, stem: str = "constraints") -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "free": out / f"{stem}_free.ply",
            "occ": out / f"{stem}_occ.ply",
            "meta": out / f"{stem}.json",
        }
        write_point_cloud(paths["free"], self.free_points)
        write_point_cloud(paths["occ"], self.occ_points)
        meta = {"delta": self.delta, "resolution": self.resolution,
                "free": paths["free"].name, "occ": paths["occ"].name,
                "free_count": len(self.free_points), "occ_count": len(self.occ_points)}
        paths["meta"].write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return paths

    @classmethod
    def load(cls, sidecar) -> "ConstraintSet":
        sidecar = Path(sidecar)
        meta = json.loads(sidecar.read_text())
        free = read_point_cloud(sidecar.parent / meta["free"]).points
        occ = read_point_cloud(sidecar.parent / meta["occ"]).points
        return cls(free, occ, float(meta["delta"]), float(meta["resolution"]))


def shells(scan: OrientedPointCloud, delta: float) -> tuple[np.ndarray, np.ndarray]:
    """Un-subsampled shells ``p + delta n`` and ``p - delta n``."""
    offset = delta * scan.normals
    return scan.points + offset, scan.points - offset


def generate_constraints(scan: OrientedPointCloud, delta: float = DEFAULT_DELTA,
                         resolution: float = DEFAULT_RESOLUTION) -> ConstraintSet:
    """Offset the scan along its (free-space facing) normals and thin each shell.

    The two shells are subsampled independently on the ``resolution`` lattice.
    """
    if delta < 0:
        raise ValueError("delta must be non-negative")
    if len(scan) == 0:
        return ConstraintSet(np.zeros((0, 3)), np.zeros((0, 3)), delta, resolution)
    free, occ = shells(scan, delta)
    free = free[grid_subsample_indices(free, resolution)]
    occ = occ[grid_subsample_indices(occ, resolution)]
    return ConstraintSet(free, occ, delta, resolution)


def orient_normals_toward_camera(scan: OrientedPointCloud, camera_position) -> OrientedPointCloud:
    """Flip each normal whose dot with ``camera - point`` is negative."""
    c = np.asarray(camera_position, dtype=np.float64)
    normals = scan.normals.copy()
    flip = np.einsum("ij,ij->i", normals, c - scan.points) < 0
    normals[flip] *= -1.0
    return OrientedPointCloud(scan.points.copy(), normals,
                              None if scan.labels is None else scan.labels.copy())


def estimate_normals_pca(cloud, k: int = 16) -> tuple[OrientedPointCloud, np.ndarray]:
    """Plane-fit normals from the k-nearest-neighbour covariance.

    Returns the oriented cloud and a boolean ``reliable`` mask. Rank-deficient
    neighbourhoods (fewer than two significant directions) get normal +z and
    ``reliable = False``; they are kept so the cloud never shrinks.
    """
    if k < 3:
        raise ValueError("k must be >= 3")
    pts = as_points(cloud.points if isinstance(cloud, OrientedPointCloud) else cloud)
    if len(pts) < k:
        raise ValueError(f"need at least k={k} points, got {len(pts)}")
    idx, _ = KDTree(pts).query_knn(pts, k)
    nbr = pts[idx]
    centered = nbr - nbr.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / k
    evals, evecs = np.linalg.eigh(cov)
    normals = evecs[:, :, 0].copy()
    scale = np.maximum(evals[:, 2], 1e-300)
    reliable = (evals[:, 1] > 1e-10 * scale) & (evals[:, 2] > 0)
    normals[~reliable] = [0.0, 0.0, 1.0]
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    labels = cloud.labels if isinstance(cloud, OrientedPointCloud) else None
    return OrientedPointCloud(pts, normals, labels), reliable
