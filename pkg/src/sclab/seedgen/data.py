"""Synthetic half-observed boxes and ellipsoids for toy training."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from sclab.constraints import ConstraintSet, generate_constraints
from sclab.geometry.primitives import box, icosphere
from sclab.geometry.sampling import farthest_point_sample, sample_surface
from sclab.geometry.types import OrientedPointCloud, TriangleMesh
from sclab.seedgen.model import ObjectInputs, SeedGenConfig, object_inputs, stack_inputs

DENSE_POOL = 2048
SCAN_POOL = 1024


@dataclass
class ToyExample:
    scan: OrientedPointCloud
    constraints: ConstraintSet
    gt_levels: list[np.ndarray]
    gt_normals: np.ndarray   # normals of gt_levels[-1]
    center: np.ndarray       # centroid of the dense ground truth
    mesh: TriangleMesh


def _oriented_samples(mesh: TriangleMesh, n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    pts, faces = sample_surface(mesh, n, seed, return_faces=True)
    return pts, mesh.face_normals[faces]


def toy_shape(rng: np.random.Generator, cfg: SeedGenConfig) -> ToyExample:
    kind = rng.integers(2)
    half = rng.uniform(0.15, 0.4, 3)
    if kind == 0:
        local = box(tuple(half))
    else:
        local = icosphere(2).transformed(scale=half)
    rot = Rotation.from_euler("z", rng.uniform(0, 2 * np.pi)).as_matrix()
    mesh = local.transformed(rot, rng.uniform(-1.0, 1.0, 3))
    seeds = rng.integers(0, 2 ** 31, 2)

    dense, dense_n = _oriented_samples(mesh, DENSE_POOL, int(seeds[0]))
    order = farthest_point_sample(dense, cfg.m_dense)
    gt_levels = [dense[order[:n]] for n in cfg.level_sizes]

    pts, nrm = _oriented_samples(mesh, SCAN_POOL, int(seeds[1]))
    center = gt_levels[-1].mean(axis=0)
    view = rng.normal(size=3)
    view /= np.linalg.norm(view)
    keep = (pts - center) @ view > 0
    scan = OrientedPointCloud(pts[keep], nrm[keep])
    return ToyExample(scan, generate_constraints(scan), gt_levels, dense_n[order], center, mesh)


def toy_dataset(n_shapes: int, cfg: SeedGenConfig, seed: int = 0) -> list[ToyExample]:
    rng = np.random.default_rng(seed)
    return [toy_shape(rng, cfg) for _ in range(n_shapes)]


@dataclass
class ToyBatch:
    examples: list[ToyExample]
    inputs: ObjectInputs


def make_batch(examples: list[ToyExample], cfg: SeedGenConfig) -> ToyBatch:
    return ToyBatch(examples, stack_inputs([object_inputs(e.scan, e.constraints, cfg) for e in examples]))
