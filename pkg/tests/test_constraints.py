import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sclab.constraints import (ConstraintSet, estimate_normals_pca, generate_constraints,
                               orient_normals_toward_camera, shells)
from sclab.geometry.sampling import grid_subsample_indices
from sclab.geometry.types import OrientedPointCloud


def _occupied(points, res):
    return len(np.unique(np.floor(points / res).astype(np.int64), axis=0))


def test_single_point_shells():
    scan = OrientedPointCloud([[0.0, 0.0, 0.0]], [[0.0, 0.0, 1.0]])
    c = generate_constraints(scan, 0.02)
    assert np.array_equal(c.free_points, [[0.0, 0.0, 0.02]])
    assert np.array_equal(c.occ_points, [[0.0, 0.0, -0.02]])


def test_plane_cell_counts():
    g = np.arange(51) * 0.02
    x, y = np.meshgrid(g, g)
    pts = np.c_[x.ravel(), y.ravel(), np.full(x.size, 0.5)]
    scan = OrientedPointCloud(pts, np.tile([0.0, 0.0, 1.0], (len(pts), 1)))
    c = generate_constraints(scan, 0.02, 0.10)
    free, occ = shells(scan, 0.02)
    assert len(c.free_points) == _occupied(free, 0.10)
    assert len(c.occ_points) == _occupied(occ, 0.10)
    assert abs(len(c.free_points) - 121) <= 11


def test_zero_delta_gives_subsampled_scan():
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, 1, (500, 3))
    n = rng.normal(size=(500, 3))
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    c = generate_constraints(OrientedPointCloud(pts, n), 0.0, 0.2)
    sub = pts[grid_subsample_indices(pts, 0.2)]
    assert np.array_equal(c.free_points, sub)
    assert np.array_equal(c.occ_points, sub)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 300), st.floats(0.001, 0.1), st.sampled_from([0.05, 0.1, 0.3]), st.integers(0, 2 ** 31))
def test_constraints_are_shell_members(n, delta, res, seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-1, 1, (n, 3))
    nrm = rng.normal(size=(n, 3))
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    scan = OrientedPointCloud(pts, nrm)
    free, occ = shells(scan, delta)
    assert np.allclose(np.linalg.norm(free - pts, axis=1), delta, rtol=1e-12, atol=1e-15)
    c = generate_constraints(scan, delta, res)
    assert set(map(tuple, c.free_points)) <= set(map(tuple, free))
    assert set(map(tuple, c.occ_points)) <= set(map(tuple, occ))
    assert len(c.free_points) == _occupied(free, res)
    assert len(c.occ_points) == _occupied(occ, res)


def test_negative_delta_rejected():
    with pytest.raises(ValueError):
        generate_constraints(OrientedPointCloud.empty(), -0.1)


def test_constraint_set_save_load(tmp_path):
    rng = np.random.default_rng(1)
    c = ConstraintSet(rng.normal(size=(7, 3)), rng.normal(size=(4, 3)), 0.03, 0.2)
    paths = c.save(tmp_path, "cons")
    back = ConstraintSet.load(paths["meta"])
    assert np.array_equal(back.free_points, c.free_points)
    assert np.array_equal(back.occ_points, c.occ_points)
    assert (back.delta, back.resolution) == (0.03, 0.2)


def test_orient_toward_camera():
    scan = OrientedPointCloud([[0.0, 0.0, 0.0]], [[0.0, 0.0, -1.0]])
    out = orient_normals_toward_camera(scan, (0, 0, 5))
    assert np.array_equal(out.normals, [[0.0, 0.0, 1.0]])


@pytest.mark.parametrize("k", [16, 32, 48])
def test_pca_normals_on_sphere(k):
    rng = np.random.default_rng(k)
    p = rng.normal(size=(4000, 3))
    p /= np.linalg.norm(p, axis=1, keepdims=True)
    cloud, reliable = estimate_normals_pca(p, k)
    assert reliable.all()
    cosang = np.abs(np.einsum("ij,ij->i", cloud.normals, p))
    assert np.all(cosang >= np.cos(np.radians(5)))


def test_pca_flags_degenerate_neighbourhoods():
    pts = np.c_[np.linspace(0, 1, 20), np.zeros(20), np.zeros(20)]
    cloud, reliable = estimate_normals_pca(pts, 5)
    assert len(cloud) == 20
    assert not reliable.any()
    with pytest.raises(ValueError):
        estimate_normals_pca(pts, 2)
