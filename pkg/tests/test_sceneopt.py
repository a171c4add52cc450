import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from sclab.demo import demo_layout
from sclab.geometry.primitives import box, box_from_bounds, l_shape
from sclab.geometry.sampling import sample_surface
from sclab.layout import ObjectPlacement, SceneLayout, quat_from_matrix
from sclab.sceneopt import (LayoutObjectiveWeights, PlacementObjective, optimize_placement,
                            placement_from_params, verify_scene)

ROOM = box_from_bounds((0, 0, 0), (4, 4, 3))
LIB = {"crate": box((0.3, 0.2, 0.25), (0.0, 0.0, 0.25)), "ell": l_shape(0.3, 0.4)}


def scene(objects=()):
    return SceneLayout(ROOM, list(objects), LIB)


# -- layout ----------------------------------------------------------------------

def test_placement_validation():
    with pytest.raises(ValueError):
        ObjectPlacement("crate", rotation=(1.0, 1.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        ObjectPlacement("crate", scale=(1.0, 0.0, 1.0))
    with pytest.raises(KeyError):
        scene([ObjectPlacement("missing")])


def test_layout_json_roundtrip(tmp_path):
    layout = demo_layout(3)
    layout.to_json(tmp_path / "layout.json")
    back = SceneLayout.from_json(tmp_path / "layout.json")
    assert [o.id for o in back.objects] == [o.id for o in layout.objects]
    for a, b in zip(layout.placed_meshes, back.placed_meshes):
        assert np.array_equal(a.vertices, b.vertices)
    doc = json.loads((tmp_path / "layout.json").read_text())
    assert set(doc["objects"][0]) >= {"id", "mesh", "rotation_wxyz", "translation_xyz", "scale_xyz"}


def test_placement_apply_order():
    rot = Rotation.from_euler("z", 90, degrees=True).as_matrix()
    p = ObjectPlacement("crate", quat_from_matrix(rot), (1, 2, 3), (2, 1, 1))
    assert np.allclose(p.apply([[1.0, 0.0, 0.0]]), [[1.0, 4.0, 3.0]])


# -- objective --------------------------------------------------------------------

def test_scale_term_doubled():
    init = ObjectPlacement("crate", translation=(2, 2, 0), scale=(1.5, 1.5, 1.5))
    obj = PlacementObjective(np.zeros((1, 3)), scene(), init)
    assert obj.terms(init.with_pose(scale=(3.0, 3.0, 3.0)))["scale"] == pytest.approx(3 * 1.5 ** 2)


def test_floor_term_for_lifted_object():
    init = ObjectPlacement("crate", translation=(2, 2, 0.1))
    obj = PlacementObjective(np.zeros((1, 3)), scene(), init)
    assert obj.terms(init)["floor"] == pytest.approx(0.01, rel=1e-9)
    assert obj.terms(init.with_pose(translation=(2, 2, 0)))["floor"] == pytest.approx(0.0, abs=1e-20)


def test_collision_term_counts_penetration():
    other = ObjectPlacement("crate", translation=(2, 2, 0), id="other")
    init = ObjectPlacement("crate", translation=(2.5, 2, 0))
    obj = PlacementObjective(np.zeros((1, 3)), scene([other]), init)
    assert obj.terms(init)["col"] > 0
    # floor contact only leaves rounding-level terms
    assert obj.terms(init.with_pose(translation=(3.0, 2, 0)))["col"] == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.floats(-np.pi, np.pi), st.floats(-1, 1), st.floats(-1, 1), st.floats(-0.5, 0.5))
def test_objective_rigid_invariance(yaw, tx, ty, tz):
    # yaw about z keeps the lowest-z sample order, so the comparison is sample for sample
    rot = Rotation.from_euler("z", yaw).as_matrix()
    t = np.array([tx, ty, tz])
    other = ObjectPlacement("ell", translation=(1.0, 1.0, 0.0), id="ell0")
    init = ObjectPlacement("crate", quat_from_matrix(Rotation.from_euler("z", 0.3).as_matrix()), (2.0, 2.2, 0.05))
    target = sample_surface(LIB["crate"], 300, 5) + [2.0, 2.15, 0.0]

    def moved(p):
        return p.with_pose(rot @ p.matrix, rot @ np.asarray(p.translation) + t)

    base = PlacementObjective(target, scene([other]), init)
    layout2 = SceneLayout(ROOM.transformed(rot, t), [moved(other)], LIB)
    twin = PlacementObjective(target @ rot.T + t, layout2, moved(init))
    a, b = base.terms(init), twin.terms(moved(init))
    for k in a:
        assert b[k] == pytest.approx(a[k], rel=1e-7, abs=1e-12)


def test_params_zero_is_identity():
    init = ObjectPlacement("crate", translation=(1, 2, 0), scale=(1.1, 0.9, 1.0))
    p = placement_from_params(init, np.zeros(9))
    assert np.allclose(p.matrix, init.matrix) and p.translation == init.translation and p.scale == init.scale


def test_optimizer_monotone_and_not_worse():
    truth = ObjectPlacement("crate", translation=(2, 2, 0))
    target = sample_surface(scene([truth]).placed_meshes[0], 800, 1)
    init = truth.with_pose(translation=(2.03, 1.98, 0.01))
    res = optimize_placement(init, target, scene(), budget=150)
    assert res.value <= res.init_value
    assert all(b <= a for a, b in zip(res.trace, res.trace[1:]))
    assert res.evaluations <= 150


def test_weights_validated():
    with pytest.raises(ValueError):
        LayoutObjectiveWeights(w_col=-1)


# -- verification ---------------------------------------------------------------------

def test_verify_demo_scene_clean():
    assert verify_scene(demo_layout(0)).pct_points_in_collision == 0.0


def test_verify_detects_overlap_and_escape():
    a = ObjectPlacement("crate", translation=(2, 2, 0), id="a")
    b = ObjectPlacement("crate", translation=(2.3, 2, 0), id="b")
    c = ObjectPlacement("crate", translation=(3.9, 1, 0), id="c")
    out = verify_scene(scene([a, b, c]), 1000)
    assert out.per_object[0]["colliding"] > 0 and out.per_object[2]["colliding"] > 0
    assert 0 < out.pct_points_in_collision < 100


def test_verify_overlap_fraction_matches_area_ratio():
    # unit cubes 0.1 apart in x: only each cube's inner x face lies inside the other (1/6 of area);
    # the shared side-face strips are contact and do not count
    lib = {"cube": box((0.5, 0.5, 0.5))}
    room = box_from_bounds((-2, -2, -2), (2, 2, 2))
    layout = SceneLayout(room, [ObjectPlacement("cube", translation=(-0.45, 0, 0), id="a"),
                                ObjectPlacement("cube", translation=(0.45, 0, 0), id="b")], lib)
    n = 6000
    pct = verify_scene(layout, n).pct_points_in_collision / 100
    sigma = np.sqrt((1 / 6) * (5 / 6) / (2 * n))
    assert abs(pct - 1 / 6) <= 3 * sigma
