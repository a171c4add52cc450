import numpy as np
import pytest

from oracles import mesh_unsigned_distance, ray_triangle_hits
from sclab.demo import demo_cameras, demo_layout
from sclab.geometry.primitives import box, box_from_bounds
from sclab.layout import ObjectPlacement, SceneLayout
from sclab.scansynth import (MISS_ID, Camera, backproject, fuse_with_sources, load_cameras, look_at,
                             orbit_cameras, read_pfm, render_view, save_cameras, save_view, synthesize_scan,
                             write_pfm)


def forward_camera(w=9, h=7, f=10.0):
    return Camera(f, f, w / 2, h / 2, w, h, np.eye(4))


def cube_scene():
    room = box_from_bounds((-3, -3, -3), (3, 3, 3))
    return SceneLayout(room, [ObjectPlacement("cube", translation=(0, 0, 2))], {"cube": box((0.5, 0.5, 0.5))})


def test_camera_validation_and_json(tmp_path):
    bad = np.eye(4)
    bad[0, 0] = 2.0
    with pytest.raises(ValueError):
        Camera(1, 1, 0, 0, 2, 2, bad)
    with pytest.raises(ValueError):
        Camera(0, 1, 0, 0, 2, 2, np.eye(4))
    cams = orbit_cameras((0, 0, 0), 2.0, 1.0, n=3)
    save_cameras(tmp_path / "c.json", cams)
    back = load_cameras(tmp_path / "c.json")
    for a, b in zip(cams, back):
        assert np.array_equal(a.world_from_camera, b.world_from_camera) and a.fx == b.fx


def test_look_at_points_z_at_target():
    m = look_at((1.0, 2.0, 1.0), (0.0, 0.0, 1.0))
    assert np.allclose(m[:3, 2], np.array([-1.0, -2.0, 0.0]) / np.sqrt(5))
    assert np.allclose(m[:3, :3] @ m[:3, :3].T, np.eye(3))


def test_center_pixel_depth():
    cam = forward_camera()
    view = render_view(cube_scene(), cam)
    assert view.depth[3, 4] == pytest.approx(1.5, abs=1e-12)
    assert view.instance[3, 4] == 0
    assert np.allclose(view.normal[3, 4], [0, 0, -1])
    assert np.allclose(np.linalg.norm(view.normal[view.depth > 0], axis=1), 1.0)


def test_empty_scene_view():
    view = render_view(None, forward_camera())
    assert np.all(view.depth == 0) and np.all(view.instance == MISS_ID)
    cloud, vid, pid = fuse_with_sources([view], [forward_camera()])
    assert len(cloud) == 0 and len(vid) == 0


def test_plane_backprojection_is_planar():
    room = box_from_bounds((-5, -5, 0), (5, 5, 3))
    layout = SceneLayout(room, [], {})
    cam = Camera(30.0, 30.0, 32, 24, 64, 48, look_at((0.3, -0.2, 2.0), (0.5, 0.4, 0.0)))
    view = render_view(layout, cam)
    pts = backproject(view, cam).points
    floor = view.instance.reshape(-1)[view.depth.reshape(-1) > 0] == -1
    assert floor.all()
    assert np.abs(pts[:, 2]).max() <= 1e-6


def _roundtrip_errors(layout, cams, cloud, vid, pid, stride=1):
    mesh, owner = layout.scene_mesh()
    worst_t = 0.0
    bad_labels = 0
    for i in range(0, len(cloud), stride):
        cam = cams[vid[i]]
        d_cam = cam.pixel_dirs()[pid[i]]
        d = cam.rotation @ (d_cam / np.linalg.norm(d_cam))
        t, tri, _, _ = ray_triangle_hits(cam.position, d, mesh)
        t_hit = t.min()
        t_pt = np.linalg.norm(cloud.points[i] - cam.position)
        worst_t = max(worst_t, abs(t_pt - t_hit))
        mine = owner[tri[np.argmin(t)]]
        bad_labels += int(mine != cloud.labels[i])
    return worst_t, bad_labels


def test_demo_roundtrip_subset():
    layout = demo_layout(0)
    cams = demo_cameras(4, 48, 36)
    views = [render_view(layout, c) for c in cams]
    cloud, vid, pid = fuse_with_sources(views, cams, 0.02)
    worst, bad = _roundtrip_errors(layout, cams, cloud, vid, pid, stride=7)
    assert worst < 1e-6 and bad == 0
    # label -> mesh consistency against the owning surface
    meshes = layout.placed_meshes
    for k, m in enumerate(meshes):
        pts = cloud.points[cloud.labels == k]
        if len(pts):
            assert mesh_unsigned_distance(pts, m).max() <= 1e-6


def test_synthesize_scan_is_grid_thinned():
    scan, views = synthesize_scan(cube_scene(), [forward_camera(31, 21, 20.0)], 0.05)
    cells = np.floor(scan.points / 0.05).astype(np.int64)
    assert len(np.unique(cells, axis=0)) == len(scan)
    assert len(views) == 1 and set(np.unique(scan.labels)) <= {-1, 0}


def test_pfm_and_view_files(tmp_path):
    img = np.random.default_rng(0).random((5, 7)).astype(np.float32)
    write_pfm(tmp_path / "a.pfm", img)
    assert np.array_equal(read_pfm(tmp_path / "a.pfm"), img)
    cam = forward_camera()
    paths = save_view(tmp_path / "v", render_view(cube_scene(), cam), cam)
    assert all(p.exists() for p in paths.values())
    depth = read_pfm(paths["depth_pfm"])
    assert depth[3, 4] == pytest.approx(1.5, abs=1e-6)
