"""Fit one object's pose and scale into a scene, and check finished scenes for collisions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.spatial.transform import Rotation

from sclab.geometry.bvh import signed_distance
from sclab.geometry.kdtree import KDTree
from sclab.geometry.sampling import sample_surface
from sclab.geometry.types import as_points
from sclab.layout import ObjectPlacement, SceneLayout

OBJECTIVE_SAMPLES = 1024
BOTTOM_FRACTION = 0.05
VERIFY_TOL = 1e-6


@dataclass(frozen=True)
class LayoutObjectiveWeights:
    w_align: float = 1.0
    w_col: float = 10.0
    w_scale: float = 1.0
    w_floor: float = 1.0

    def __post_init__(self):
        if min(self.w_align, self.w_col, self.w_scale, self.w_floor) < 0:
            raise ValueError("objective weights must be non-negative")


class PlacementObjective:
    """Objective for placing ``init.mesh_ref`` into ``scene`` to match ``target``.

    Surface samples are drawn once in the object frame and moved with the
    placement, so the objective is a deterministic function of the pose.
    """

    def __init__(self, target, scene: SceneLayout, init: ObjectPlacement,
                 w: LayoutObjectiveWeights = LayoutObjectiveWeights(), seed: int = 0,
                 n_samples: int = OBJECTIVE_SAMPLES):
        self.target = as_points(target)
        if len(self.target) == 0:
            raise ValueError("empty target point set")
        if init.mesh_ref not in scene.library:
            raise KeyError(f"missing mesh {init.mesh_ref!r}")
        self.scene = scene
        self.init = init
        self.w = w
        self.local = sample_surface(scene.library[init.mesh_ref], n_samples, seed)
        # a convex part first breaks through a plane at a corner, which random samples miss
        self.corners = scene.library[init.mesh_ref].vertices
        self.target_tree = KDTree(self.target)
        self.n_bottom = max(1, int(np.ceil(BOTTOM_FRACTION * n_samples)))

    def _scene_sdf(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        bg = signed_distance(self.scene.background_bvh, pts)
        if self.scene.objects:
            objs = np.min(self.scene.object_sdf(pts), axis=0)
        else:
            objs = np.full(len(pts), np.inf)
        return bg, objs

    def terms(self, placement: ObjectPlacement) -> dict[str, float]:
        pts = placement.apply(self.local)
        _, d_pt = self.target_tree.query(pts)
        _, d_tp = KDTree(pts).query(self.target)
        align = float(d_pt.mean() + d_tp.mean())

        bg, objs = self._scene_sdf(pts)
        col = float(np.mean(np.maximum(0.0, -objs) + np.maximum(0.0, bg)))
        cbg, cobj = self._scene_sdf(placement.apply(self.corners))
        col += float(np.mean(np.maximum(0.0, -cobj) + np.maximum(0.0, cbg)))

        ds = np.asarray(placement.scale) - np.asarray(self.init.scale)
        scale = float(ds @ ds)

        low = np.argsort(pts[:, 2], kind="stable")[:self.n_bottom]
        gap = np.minimum(np.abs(bg[low]), np.abs(objs[low]))
        floor = float(np.mean(gap ** 2))
        return {"align": align, "col": col, "scale": scale, "floor": floor}

    def __call__(self, placement: ObjectPlacement) -> float:
        t = self.terms(placement)
        w = self.w
        return w.w_align * t["align"] + w.w_col * t["col"] + w.w_scale * t["scale"] + w.w_floor * t["floor"]


def layout_objective(placement: ObjectPlacement, target, scene_so_far: SceneLayout, init: ObjectPlacement,
                     w: LayoutObjectiveWeights = LayoutObjectiveWeights(), seed: int = 0) -> float:
    return PlacementObjective(target, scene_so_far, init, w, seed)(placement)


def placement_from_params(init: ObjectPlacement, x) -> ObjectPlacement:
    """x = (axis-angle delta, translation delta, log-scale delta)."""
    x = np.asarray(x, dtype=np.float64)
    rot = Rotation.from_rotvec(x[:3]).as_matrix() @ init.matrix
    return init.with_pose(rot, np.asarray(init.translation) + x[3:6], np.asarray(init.scale) * np.exp(x[6:9]))


@dataclass
class OptimizationResult:
    placement: ObjectPlacement
    value: float
    init_value: float
    trace: list[float] = field(default_factory=list)  # best value after each simplex iteration
    evaluations: int = 0


def optimize_placement(init: ObjectPlacement, target, scene_so_far: SceneLayout,
                       w: LayoutObjectiveWeights = LayoutObjectiveWeights(), budget: int = 600,
                       seed: int = 0, step=(0.05, 0.02, 0.03)) -> OptimizationResult:
    """Nelder-Mead over rotation, translation and log-scale deltas from ``init``.

    Returns the best placement seen; it is never worse than ``init``.
    ``step`` sets the initial simplex edge for the rotation (rad),
    translation (m) and log-scale groups.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    obj = PlacementObjective(target, scene_so_far, init, w, seed)
    best = {"x": np.zeros(9), "f": np.inf}
    count = [0]

    def f(x):
        count[0] += 1
        v = obj(placement_from_params(init, x))
        if not np.isfinite(v):
            v = np.inf
        if v < best["f"]:
            best["f"], best["x"] = v, np.array(x, copy=True)
        return v

    init_value = f(np.zeros(9))
    trace = [init_value]
    sizes = np.repeat(np.asarray(step, dtype=np.float64), 3)
    # restart from the best point with a shrinking simplex; a collapsed simplex
    # tends to stall on the kinks of the collision hinge
    while budget - count[0] > 10:
        x0 = best["x"].copy()
        simplex = np.tile(x0, (10, 1))
        for k in range(9):
            simplex[k + 1, k] += sizes[k]
        before = count[0]
        minimize(f, x0, method="Nelder-Mead",
                 callback=lambda xk: trace.append(best["f"]),
                 options={"maxfev": budget - count[0], "initial_simplex": simplex,
                          "xatol": 1e-7, "fatol": 1e-12})
        if count[0] - before <= 11:
            break
        sizes = sizes * 0.25
    return OptimizationResult(placement_from_params(init, best["x"]), float(best["f"]), init_value,
                              trace, count[0])


@dataclass
class VerifyResult:
    pct_points_in_collision: float
    per_object: list[dict]


def verify_scene(layout: SceneLayout, samples_per_object: int = 2048, seed: int = 0) -> VerifyResult:
    """Percentage of surface samples inside another object or outside the background."""
    rows = []
    total = hit = 0
    for i in range(len(layout.objects)):
        pts = sample_surface(layout.placed_meshes[i], samples_per_object, seed + i)
        bad = signed_distance(layout.background_bvh, pts) > VERIFY_TOL
        for j, bvh in enumerate(layout.object_bvhs):
            if j != i:
                bad |= signed_distance(bvh, pts) < -VERIFY_TOL
        n_bad = int(bad.sum())
        rows.append({"id": layout.objects[i].id, "points": samples_per_object, "colliding": n_bad,
                     "pct": 100.0 * n_bad / samples_per_object})
        total += samples_per_object
        hit += n_bad
    return VerifyResult(100.0 * hit / total if total else 0.0, rows)
