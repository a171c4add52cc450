"""A small synthetic room: primitive furniture resting on the floor, no contacts but the floor."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from sclab.geometry.io import write_mesh
from sclab.geometry.primitives import box, cylinder, l_shape, room
from sclab.layout import ObjectPlacement, SceneLayout
from sclab.scansynth import Camera, orbit_cameras, save_cameras

ROOM_LO = (0.0, 0.0, 0.0)
ROOM_HI = (5.0, 4.0, 2.6)
MIN_CLEARANCE = 0.01


def _yaw(deg: float) -> tuple:
    h = np.radians(deg) / 2
    return (float(np.cos(h)), 0.0, 0.0, float(np.sin(h)))


def demo_library() -> dict:
    """Meshes in their own frame with the base on z = 0."""
    return {
        "table": box((0.6, 0.4, 0.375), (0.0, 0.0, 0.375)),
        "cabinet": box((0.3, 0.25, 0.5), (0.0, 0.0, 0.5)),
        "stool": cylinder(0.25, 0.45, 24),
        "sofa": l_shape(0.5, 0.4).transformed(translation=(-0.5, -0.5, 0.0)),
        "crate": box((0.5, 0.5, 0.5), (0.0, 0.0, 0.5)),
    }


def demo_layout(seed: int = 0) -> SceneLayout:
    """Fixed furniture arrangement; ``seed`` jitters yaw by up to 10 degrees."""
    rng = np.random.default_rng(seed)
    jitter = rng.uniform(-10.0, 10.0, 5)
    objects = [
        ObjectPlacement("table", _yaw(15 + jitter[0]), (1.4, 1.3, 0.0), (1.0, 1.0, 1.0), "table_0", "table"),
        ObjectPlacement("cabinet", _yaw(jitter[1]), (4.2, 3.3, 0.0), (1.0, 1.0, 1.0), "cabinet_0", "cabinet"),
        ObjectPlacement("stool", _yaw(jitter[2]), (2.9, 1.0, 0.0), (1.0, 1.0, 1.0), "stool_0", "chair"),
        ObjectPlacement("sofa", _yaw(90 + jitter[3]), (1.2, 3.0, 0.0), (1.0, 1.0, 1.0), "sofa_0", "sofa"),
        ObjectPlacement("crate", _yaw(30 + jitter[4]), (3.6, 2.0, 0.0), (0.7, 0.45, 0.5), "crate_0", "box"),
    ]
    layout = SceneLayout(room(ROOM_LO, ROOM_HI), objects, demo_library())
    _check_clearances(layout)
    return layout


def _check_clearances(layout: SceneLayout) -> None:
    meshes = layout.placed_meshes
    lo, hi = np.asarray(ROOM_LO), np.asarray(ROOM_HI)
    boxes = [m.bounds for m in meshes]
    for i, (a_lo, a_hi) in enumerate(boxes):
        if np.any(a_lo[:2] < lo[:2] + MIN_CLEARANCE) or np.any(a_hi > hi - MIN_CLEARANCE):
            raise AssertionError(f"object {i} too close to a wall")
        for j in range(i):
            b_lo, b_hi = boxes[j]
            gap = np.max(np.maximum(b_lo - a_hi, a_lo - b_hi))
            if gap < MIN_CLEARANCE:
                raise AssertionError(f"objects {j} and {i} closer than {MIN_CLEARANCE} m")


def demo_cameras(n: int = 10, width: int = 96, height: int = 72) -> list[Camera]:
    center = (np.asarray(ROOM_LO) + np.asarray(ROOM_HI)) / 2
    return orbit_cameras(center, radius=1.5, height=1.7, n=n, width=width, height_px=height,
                         fov_deg=75.0, target_height=0.4, phase=0.1)


def write_demo(out_dir, seed: int = 0) -> dict:
    """Write layout.json, library meshes, world-frame object meshes and cameras.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    layout = demo_layout(seed)
    layout.to_json(out / "layout.json")
    world = out / "objects_world"
    world.mkdir(exist_ok=True)
    for obj, mesh in zip(layout.objects, layout.placed_meshes):
        write_mesh(world / f"{obj.id}.obj", mesh)
    save_cameras(out / "cameras.json", demo_cameras())
    summary = {"layout": "layout.json", "cameras": "cameras.json", "objects_world": "objects_world",
               "objects": [o.id for o in layout.objects]}
    (out / "demo.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary
