"""Scene completion, collision, detection-style AP and mesh quality metrics."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from sclab.geometry.bvh import MeshBVH, signed_distance
from sclab.geometry.sampling import sample_surface
from sclab.geometry.types import OrientedPointCloud, TriangleMesh, as_points
from sclab.geometry.voxel import lattice_for_bounds, voxelize_solid
from sclab.layout import SceneLayout
from sclab.losses import one_sided_chamfer, chamfer, uhd

# penetrations at or below this depth are contact, not collision
CONTACT_TOL = 1e-9
SCENE_SAMPLES = 2048
INSTANCE_SAMPLES = 4096
MESH_METRIC_SAMPLES = 1000


@dataclass(frozen=True)
class MetricConfig:
    tau_pcr: float = 0.047
    voxel_size_iou: float = 0.047
    tau_comp: float = 0.01
    accuracy_quantile: float = 0.9
    scale_distance: float = 1e3
    scale_col: float = 1e4

    def __post_init__(self):
        for name in ("tau_pcr", "voxel_size_iou", "tau_comp", "scale_distance", "scale_col"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.accuracy_quantile <= 1:
            raise ValueError("accuracy_quantile must lie in (0, 1]")


# -- collisions ----------------------------------------------------------------

def collision_terms(background: MeshBVH, objects: Sequence[MeshBVH], completions: Sequence,
                    contact_tol: float = CONTACT_TOL) -> list[np.ndarray]:
    """Per point penetration depth (>= 0) for every completion.

    Depth is how far a point of completion ``i`` lies outside the background
    plus how deep it lies inside every other object ``j != i``.
    """
    if len(objects) != len(completions):
        raise ValueError(f"{len(completions)} completions for {len(objects)} object meshes")
    out = []
    for i, pts in enumerate(completions):
        pts = as_points(pts)
        depth = np.zeros(len(pts))
        if len(pts) == 0:
            out.append(depth)
            continue
        outside = signed_distance(background, pts)
        depth += np.where(outside > contact_tol, outside, 0.0)
        for j, obj in enumerate(objects):
            if j == i:
                continue
            inside = -signed_distance(obj, pts)
            depth += np.where(inside > contact_tol, inside, 0.0)
        out.append(depth)
    return out


def collision_metric_meshes(background: TriangleMesh, meshes: Sequence[TriangleMesh], completions: Sequence,
                            contact_tol: float = CONTACT_TOL) -> tuple[float, float]:
    bg = MeshBVH(background)
    bvhs = [MeshBVH(m) for m in meshes]
    return _col_from_terms(collision_terms(bg, bvhs, completions, contact_tol))


def collision_metric(layout: SceneLayout, completions: Sequence, meshes: Sequence[TriangleMesh] | None = None,
                     contact_tol: float = CONTACT_TOL) -> tuple[float, float]:
    """(COL, %COL) of point completions against the layout background.

    ``meshes`` are the per-object meshes the completions collide with; by
    default the layout's own placed meshes. COL is unscaled (meters).
    """
    if meshes is None:
        bvhs = layout.object_bvhs
    else:
        bvhs = [MeshBVH(m) for m in meshes]
    for m in (meshes or layout.placed_meshes):
        if not m.watertight:
            raise ValueError("collision metric needs watertight meshes")
    return _col_from_terms(collision_terms(layout.background_bvh, bvhs, completions, contact_tol))


def _col_from_terms(terms: list[np.ndarray]) -> tuple[float, float]:
    if not terms:
        return 0.0, 0.0
    col = float(np.mean([t.mean() if len(t) else 0.0 for t in terms]))
    total = sum(len(t) for t in terms)
    hit = sum(int(np.count_nonzero(t > 0)) for t in terms)
    return col, (100.0 * hit / total if total else 0.0)


# -- volumetric and surface metrics ---------------------------------------------

def voxel_iou(mesh_a: TriangleMesh, mesh_b: TriangleMesh, cfg: MetricConfig = MetricConfig()) -> float:
    """IoU of solid occupancy with both meshes on one lattice (union bounds)."""
    lo = np.minimum(mesh_a.bounds[0], mesh_b.bounds[0])
    hi = np.maximum(mesh_a.bounds[1], mesh_b.bounds[1])
    origin, dims = lattice_for_bounds(lo, hi, cfg.voxel_size_iou)
    ga = voxelize_solid(mesh_a, cfg.voxel_size_iou, origin, dims).occupancy
    gb = voxelize_solid(mesh_b, cfg.voxel_size_iou, origin, dims).occupancy
    union = np.count_nonzero(ga | gb)
    if union == 0:
        return 0.0
    return np.count_nonzero(ga & gb) / union


def point_to_mesh_distance(points, mesh: TriangleMesh | MeshBVH) -> np.ndarray:
    bvh = mesh if isinstance(mesh, MeshBVH) else MeshBVH(mesh)
    return bvh.unsigned_distance(points)


def pcr(points, mesh: TriangleMesh, cfg: MetricConfig = MetricConfig()) -> float:
    """Share of points closer than ``tau_pcr`` to the mesh surface."""
    pts = as_points(points)
    if len(pts) == 0:
        raise ValueError("empty point set")
    return float(np.mean(point_to_mesh_distance(pts, mesh) < cfg.tau_pcr))


def mesh_completion(gt: TriangleMesh, pred: TriangleMesh, cfg: MetricConfig = MetricConfig(),
                    seed: int = 0, n: int = MESH_METRIC_SAMPLES) -> float:
    pts = sample_surface(gt, n, seed)
    return float(np.mean(point_to_mesh_distance(pts, pred) <= cfg.tau_comp))


def mesh_accuracy(gt: TriangleMesh, pred: TriangleMesh, cfg: MetricConfig = MetricConfig(),
                  seed: int = 0, n: int = MESH_METRIC_SAMPLES) -> float:
    pts = sample_surface(pred, n, seed)
    d = point_to_mesh_distance(pts, gt)
    return float(np.quantile(d, cfg.accuracy_quantile, method="linear"))


# -- average precision ------------------------------------------------------------

@dataclass
class Detection:
    category: str
    confidence: float
    payload: Any = None
    scene: str = ""
    id: str = ""

    def __post_init__(self):
        if not math.isfinite(self.confidence):
            raise ValueError("detection confidence must be finite")


@dataclass
class GroundTruth:
    category: str
    payload: Any = None
    scene: str = ""
    id: str = ""


def average_precision_voc11(detections: Sequence[Detection], gts: Sequence[GroundTruth],
                            match_fn: Callable[[Detection, GroundTruth], float], threshold: float,
                            higher_is_match: bool = True, return_curve: bool = False):
    """VOC2007 11-point interpolated AP.

    Detections are visited by descending confidence; each claims the best
    still-unmatched ground truth of its category and scene whose match value
    passes ``threshold``. Returns NaN when ``gts`` is empty.
    """
    npos = len(gts)
    order = sorted(range(len(detections)), key=lambda i: -detections[i].confidence)
    taken = np.zeros(npos, dtype=bool)
    tp = np.zeros(len(order))
    for rank, di in enumerate(order):
        det = detections[di]
        best, best_v = -1, None
        for gi, gt in enumerate(gts):
            if taken[gi] or gt.category != det.category or gt.scene != det.scene:
                continue
            v = float(match_fn(det, gt))
            ok = v >= threshold if higher_is_match else v <= threshold
            if not ok:
                continue
            if best_v is None or (v > best_v if higher_is_match else v < best_v):
                best, best_v = gi, v
        if best >= 0:
            taken[best] = True
            tp[rank] = 1.0
    if npos == 0:
        return (math.nan, np.zeros(0), np.zeros(0)) if return_curve else math.nan
    ctp = np.cumsum(tp)
    recall = ctp / npos
    precision = ctp / np.arange(1, len(tp) + 1)
    ap = 0.0
    for k in range(11):
        t = k / 10.0
        mask = recall >= t
        ap += precision[mask].max() if mask.any() else 0.0
    ap /= 11.0
    if return_curve:
        return ap, precision, recall
    return ap


def mean_average_precision(detections: Sequence[Detection], gts: Sequence[GroundTruth],
                           match_fn: Callable[[Detection, GroundTruth], float], threshold: float,
                           higher_is_match: bool = True) -> dict:
    """Per-category AP and their mean; categories without ground truth are skipped."""
    per_class = {}
    for cat in sorted({g.category for g in gts}):
        dets = [d for d in detections if d.category == cat]
        cgts = [g for g in gts if g.category == cat]
        per_class[cat] = average_precision_voc11(dets, cgts, match_fn, threshold, higher_is_match)
    mean = float(np.mean(list(per_class.values()))) if per_class else math.nan
    return {"per_class": per_class, "mean": mean}


# -- report ------------------------------------------------------------------------

@dataclass
class MetricReport:
    uhd: float
    ocd: float
    cd: float
    col: float
    pct_col: float
    iou: float
    pcr: float
    per_object: list[dict] = field(default_factory=list)
    map: dict | None = None

    def to_dict(self) -> dict:
        out = {"uhd": self.uhd, "ocd": self.ocd, "cd": self.cd, "col": self.col, "pct_col": self.pct_col,
               "iou": self.iou, "pcr": self.pcr, "per_object": self.per_object}
        if self.map is not None:
            out["map"] = self.map
        return out


def _sample_mesh_or_points(x, n: int, seed: int) -> np.ndarray:
    if isinstance(x, TriangleMesh):
        return sample_surface(x, n, seed)
    return as_points(x)


def scene_report(layout: SceneLayout, completions: Sequence[TriangleMesh], partial_scan: OrientedPointCloud,
                 gt_meshes: Sequence[TriangleMesh] | None = None, cfg: MetricConfig = MetricConfig(),
                 seed: int = 0, threads: int = 1) -> MetricReport:
    """Scene-level metrics of predicted object meshes against a ground-truth layout.

    UHD / one-sided CD run from the object part of the scan (``label >= 0``)
    to the predicted scene cloud; CD compares 2048 samples per object on both
    sides. Object ``i`` is sampled with seed ``seed + i`` on both sides.
    Reported distances are scaled by ``scale_distance`` and COL by ``scale_col``.
    """
    gt_meshes = list(gt_meshes) if gt_meshes is not None else layout.placed_meshes
    if len(completions) != len(gt_meshes):
        raise ValueError(f"{len(completions)} predictions for {len(gt_meshes)} ground-truth objects")
    pred_pts = [_sample_mesh_or_points(m, SCENE_SAMPLES, seed + i) for i, m in enumerate(completions)]
    gt_pts = [sample_surface(m, SCENE_SAMPLES, seed + i) for i, m in enumerate(gt_meshes)]
    pred_cloud = np.concatenate(pred_pts)
    gt_cloud = np.concatenate(gt_pts)
    if partial_scan.labels is None:
        obj_scan = partial_scan.points
    else:
        obj_scan = partial_scan.points[partial_scan.labels >= 0]
    pred_meshes = [m for m in completions if isinstance(m, TriangleMesh)]
    have_meshes = len(pred_meshes) == len(completions)

    def per_object(i: int) -> dict:
        row: dict = {"index": i, "id": layout.objects[i].id if i < len(layout.objects) else str(i)}
        if have_meshes:
            row["iou"] = voxel_iou(completions[i], gt_meshes[i], cfg)
            if partial_scan.labels is not None:
                mine = partial_scan.points[partial_scan.labels == i]
                row["pcr"] = pcr(mine, completions[i], cfg) if len(mine) else None
        return row

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(per_object, range(len(completions))))
    else:
        rows = [per_object(i) for i in range(len(completions))]

    if have_meshes:
        col, pct = collision_metric(layout, pred_pts, pred_meshes)
    else:
        col, pct = math.nan, math.nan
    ious = [r["iou"] for r in rows if r.get("iou") is not None]
    pcrs = [r["pcr"] for r in rows if r.get("pcr") is not None]
    s = cfg.scale_distance
    return MetricReport(
        uhd=uhd(obj_scan, pred_cloud) * s if len(obj_scan) else math.nan,
        ocd=one_sided_chamfer(obj_scan, pred_cloud) * s if len(obj_scan) else math.nan,
        cd=chamfer(pred_cloud, gt_cloud) * s,
        col=col * cfg.scale_col,
        pct_col=pct,
        iou=float(np.mean(ious)) if ious else math.nan,
        pcr=float(np.mean(pcrs)) if pcrs else math.nan,
        per_object=rows,
    )
