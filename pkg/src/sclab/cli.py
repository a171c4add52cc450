"""Command-line entry points: ``sclab <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 bad input data, 3 numeric failure.
Reports are JSON on stdout (or ``--out``); ``--pretty`` prints a table.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    def __init__(self, path, reason):
        super().__init__(f"{path}: {reason}")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _load(path, fn, what: str = "file"):
    p = Path(path)
    if not p.exists():
        raise DataError(p, f"{what} not found")
    try:
        return fn(p)
    except (OSError, ValueError, KeyError, TypeError, IndexError, json.JSONDecodeError) as exc:
        raise DataError(p, f"cannot read {what}: {exc}") from exc


def _threads(args) -> int:
    if args.threads is not None:
        n = args.threads
    else:
        env = os.environ.get("SCLAB_THREADS", "1")
        try:
            n = int(env)
        except ValueError:
            raise UsageError(f"SCLAB_THREADS must be an integer, got {env!r}")
    if n < 1:
        raise UsageError("--threads must be >= 1")
    return n


def _clean(x):
    """JSON-safe copy: numpy scalars to Python, NaN/inf to null."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def _table(doc: dict, prefix: str = "") -> list[tuple[str, str]]:
    rows = []
    for k, v in doc.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            rows += _table(v, key + ".")
        elif isinstance(v, list) and v and isinstance(v[0], dict):
            for i, item in enumerate(v):
                rows += _table(item, f"{key}[{i}].")
        elif isinstance(v, float):
            rows.append((key, f"{v:.6g}"))
        else:
            rows.append((key, str(v)))
    return rows


def _emit(doc: dict, args) -> None:
    doc = _clean(doc)
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    if args.pretty:
        rows = _table(doc)
        width = max((len(k) for k, _ in rows), default=0)
        sys.stdout.write("".join(f"{k:<{width}}  {v}\n" for k, v in rows))
    elif not args.out:
        sys.stdout.write(text)


def _check_positive(name: str, value: float) -> None:
    if not value > 0:
        raise UsageError(f"{name} must be positive")


# -- subcommands ---------------------------------------------------------------------

def cmd_gen_constraints(args) -> dict:
    from sclab.constraints import estimate_normals_pca, generate_constraints, orient_normals_toward_camera
    from sclab.geometry.io import read_ply, read_point_cloud

    _check_positive("--resolution", args.resolution)
    if args.delta < 0:
        raise UsageError("--delta must be non-negative")
    if args.pca_k is not None and args.camera is None:
        raise UsageError("--pca-k needs --camera to orient the estimated normals")
    has_normals = "nx" in _load(args.scan, read_ply, "scan").get("vertex", {})
    scan = _load(args.scan, read_point_cloud, "scan")
    if args.pca_k is not None:
        try:
            scan, _ = estimate_normals_pca(scan, args.pca_k)
        except ValueError as exc:
            raise DataError(args.scan, str(exc)) from exc
    elif not has_normals:
        raise DataError(args.scan, "scan has no normals (use --pca-k and --camera)")
    if args.camera is not None:
        scan = orient_normals_toward_camera(scan, args.camera)
    cons = generate_constraints(scan, args.delta, args.resolution)
    paths = cons.save(args.out_dir, args.stem)
    return {"delta": args.delta, "resolution": args.resolution, "scan_points": len(scan),
            "free_count": len(cons.free_points), "occ_count": len(cons.occ_points),
            "files": {k: str(v) for k, v in paths.items()}}


def cmd_synth_scan(args) -> dict:
    from sclab.demo import demo_cameras
    from sclab.geometry.io import write_point_cloud
    from sclab.layout import SceneLayout
    from sclab.scansynth import SceneRenderer, backproject_and_fuse, load_cameras, save_view

    _check_positive("--resolution", args.resolution)
    layout = _load(args.layout, SceneLayout.from_json, "layout")
    cameras = _load(args.cameras, load_cameras, "cameras") if args.cameras else demo_cameras(args.views)
    renderer = SceneRenderer(layout)
    n = _threads(args)
    if n > 1:
        with ThreadPoolExecutor(max_workers=n) as pool:
            views = list(pool.map(renderer.render, cameras))
    else:
        views = [renderer.render(c) for c in cameras]
    scan = backproject_and_fuse(views, cameras, args.resolution)
    Path(args.scan_out).parent.mkdir(parents=True, exist_ok=True)
    write_point_cloud(args.scan_out, scan)
    if args.views_dir:
        for k, (v, c) in enumerate(zip(views, cameras)):
            save_view(Path(args.views_dir) / f"view_{k:02d}", v, c)
    labels, counts = np.unique(scan.labels, return_counts=True) if len(scan) else ([], [])
    return {"scan": str(args.scan_out), "views": len(views), "resolution": args.resolution,
            "points": len(scan), "points_per_label": {str(int(k)): int(v) for k, v in zip(labels, counts)}}


def cmd_optimize_layout(args) -> dict:
    from sclab.geometry.io import read_point_cloud
    from sclab.layout import SceneLayout
    from sclab.sceneopt import LayoutObjectiveWeights, optimize_placement

    if args.budget < 1:
        raise UsageError("--budget must be >= 1")
    layout = _load(args.layout, SceneLayout.from_json, "layout")
    scan = _load(args.target, read_point_cloud, "target scan")
    if scan.labels is None:
        raise DataError(args.target, "target scan needs instance_id labels")
    try:
        w = LayoutObjectiveWeights(args.w_align, args.w_col, args.w_scale, args.w_floor)
    except ValueError as exc:
        raise UsageError(str(exc))
    placed = []
    rows = []
    for i, init in enumerate(layout.objects):
        target = scan.points[scan.labels == i]
        scene = layout.with_objects(placed)
        if len(target) == 0:
            placed.append(init)
            rows.append({"id": init.id, "skipped": "no target points"})
            continue
        res = optimize_placement(init, target, scene, w, args.budget, seed=args.seed + i)
        if not math.isfinite(res.value):
            raise FloatingPointError(f"objective is not finite for object {init.id}")
        placed.append(res.placement)
        rows.append({"id": init.id, "init_objective": res.init_value, "objective": res.value,
                     "evaluations": res.evaluations})
    out = layout.with_objects(placed)
    out.to_json(args.layout_out)
    return {"layout": str(args.layout_out), "objects": rows}


def cmd_verify_scene(args) -> dict:
    from sclab.layout import SceneLayout
    from sclab.sceneopt import verify_scene

    if args.samples < 1:
        raise UsageError("--samples must be >= 1")
    layout = _load(args.layout, SceneLayout.from_json, "layout")
    res = verify_scene(layout, args.samples, args.seed)
    return {"pct_points_in_collision": res.pct_points_in_collision, "per_object": res.per_object}


def cmd_eval_scene(args) -> dict:
    from sclab.geometry.io import read_mesh, read_point_cloud
    from sclab.layout import SceneLayout
    from sclab.metrics import MetricConfig, scene_report

    layout = _load(args.layout, SceneLayout.from_json, "layout")
    scan = _load(args.scan, read_point_cloud, "scan")
    pred_dir = Path(args.pred)
    if not pred_dir.is_dir():
        raise DataError(pred_dir, "prediction directory not found")
    preds = []
    for obj in layout.objects:
        path = next((pred_dir / f"{obj.id}{ext}" for ext in (".obj", ".ply") if (pred_dir / f"{obj.id}{ext}").exists()),
                    pred_dir / f"{obj.id}.obj")
        preds.append(_load(path, read_mesh, f"prediction for {obj.id}"))
    cfg = MetricConfig(tau_pcr=args.tau_pcr, voxel_size_iou=args.voxel_size)
    try:
        report = scene_report(layout, preds, scan, cfg=cfg, seed=args.seed, threads=_threads(args))
    except ValueError as exc:
        raise DataError(pred_dir, str(exc)) from exc
    return report.to_dict()


def _load_detections(path):
    from sclab.geometry.io import read_mesh
    from sclab.metrics import Detection, GroundTruth

    doc = json.loads(Path(path).read_text())
    root = Path(path).parent

    def payload(d):
        if "mesh" in d:
            return read_mesh(root / d["mesh"])
        return d.get("scores", {})
    dets = [Detection(d["category"], float(d["confidence"]), payload(d), d.get("scene", ""), str(d.get("id", k)))
            for k, d in enumerate(doc["detections"])]
    gts = [GroundTruth(g["category"], payload(g), g.get("scene", ""), str(g.get("id", k)))
           for k, g in enumerate(doc["ground_truth"])]
    return dets, gts


def cmd_eval_map(args) -> dict:
    from sclab.geometry.sampling import sample_surface
    from sclab.geometry.types import TriangleMesh
    from sclab.losses import chamfer
    from sclab.metrics import INSTANCE_SAMPLES, MetricConfig, mean_average_precision, voxel_iou

    dets, gts = _load(args.detections, _load_detections, "detections")
    cfg = MetricConfig(voxel_size_iou=args.voxel_size)

    def match(d, g):
        if isinstance(d.payload, TriangleMesh) and isinstance(g.payload, TriangleMesh):
            if args.metric == "iou":
                return voxel_iou(d.payload, g.payload, cfg)
            return chamfer(sample_surface(d.payload, INSTANCE_SAMPLES, args.seed),
                           sample_surface(g.payload, INSTANCE_SAMPLES, args.seed))
        if isinstance(d.payload, dict) and g.id in d.payload:
            return float(d.payload[g.id])
        return -math.inf if args.metric == "iou" else math.inf

    higher = args.metric == "iou"
    res = mean_average_precision(dets, gts, match, args.threshold, higher_is_match=higher)
    return {"map": {"metric": args.metric, "threshold": args.threshold, "per_class": res["per_class"],
                    "mean": res["mean"]}}


def cmd_train_toy(args) -> dict:
    from sclab.seedgen.data import toy_dataset
    from sclab.seedgen.model import SeedGenConfig, SeedGenParams
    from sclab.seedgen.train import train_toy, write_trace

    if args.steps < 0 or args.shapes < 1:
        raise UsageError("--steps must be >= 0 and --shapes >= 1")
    cfg = SeedGenConfig(m_l=args.m_l, c=args.width, c_seed=args.width, heads=args.heads)
    data = toy_dataset(args.shapes, cfg, args.seed)
    params, trace = train_toy(data, cfg, SeedGenParams.init(cfg, args.seed), args.steps, args.lr, args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt, manifest = params.save(out / "params.bin")
    write_trace(out / "loss.csv", trace)
    return {"steps": args.steps, "shapes": args.shapes, "learning_rate": args.lr,
            "initial_loss": trace[0], "final_loss": trace[-1], "ratio": trace[-1] / trace[0],
            "parameters": params.n_values(),
            "files": {"checkpoint": str(ckpt), "manifest": str(manifest), "loss": str(out / "loss.csv")}}


def cmd_demo_scene(args) -> dict:
    from sclab.demo import write_demo

    summary = write_demo(args.out_dir, args.seed)
    return {"out_dir": str(args.out_dir), **summary}


# -- parser ------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=None, help="worker cap (env SCLAB_THREADS)")
    common.add_argument("--out", help="write the JSON report here instead of stdout")
    common.add_argument("--pretty", action="store_true", help="print a key/value table")

    ap = _Parser(prog="sclab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen-constraints", parents=[common], help="free/occupied shells from a scan")
    p.add_argument("--scan", required=True)
    p.add_argument("--delta", type=float, default=0.02)
    p.add_argument("--resolution", type=float, default=0.10)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--stem", default="constraints")
    p.add_argument("--pca-k", type=int, default=None, help="estimate normals with k-NN PCA")
    p.add_argument("--camera", type=float, nargs=3, default=None, help="orient normals toward this point")
    p.set_defaults(func=cmd_gen_constraints)

    p = sub.add_parser("synth-scan", parents=[common], help="render views and fuse a labeled scan")
    p.add_argument("--layout", required=True)
    p.add_argument("--cameras", help="camera JSON; default: orbit around the room center")
    p.add_argument("--views", type=int, default=10)
    p.add_argument("--resolution", type=float, default=0.02)
    p.add_argument("--scan-out", default="scan.ply")
    p.add_argument("--views-dir", help="also write per-view depth/instance images")
    p.set_defaults(func=cmd_synth_scan)

    p = sub.add_parser("optimize-layout", parents=[common], help="fit each object to its scan points")
    p.add_argument("--layout", required=True, help="initial layout")
    p.add_argument("--target", required=True, help="labeled scan PLY")
    p.add_argument("--layout-out", default="layout_opt.json")
    p.add_argument("--budget", type=int, default=400)
    p.add_argument("--w-align", type=float, default=1.0)
    p.add_argument("--w-col", type=float, default=10.0)
    p.add_argument("--w-scale", type=float, default=1.0)
    p.add_argument("--w-floor", type=float, default=1.0)
    p.set_defaults(func=cmd_optimize_layout)

    p = sub.add_parser("verify-scene", parents=[common], help="percent of surface samples in collision")
    p.add_argument("--layout", required=True)
    p.add_argument("--samples", type=int, default=2048)
    p.set_defaults(func=cmd_verify_scene)

    p = sub.add_parser("eval-scene", parents=[common], help="scene metrics of predicted meshes")
    p.add_argument("--layout", required=True, help="ground-truth layout")
    p.add_argument("--pred", required=True, help="directory of <object id>.obj world-frame meshes")
    p.add_argument("--scan", required=True, help="labeled partial scan")
    p.add_argument("--tau-pcr", type=float, default=0.047)
    p.add_argument("--voxel-size", type=float, default=0.047)
    p.set_defaults(func=cmd_eval_scene)

    p = sub.add_parser("eval-map", parents=[common], help="VOC 11-point mAP of detections")
    p.add_argument("--detections", required=True, help="JSON with 'detections' and 'ground_truth'")
    p.add_argument("--metric", choices=("iou", "cd"), default="iou")
    p.add_argument("--threshold", type=float, default=0.25)
    p.add_argument("--voxel-size", type=float, default=0.047)
    p.set_defaults(func=cmd_eval_map)

    p = sub.add_parser("train-toy", parents=[common], help="train the toy seed generator")
    p.add_argument("--shapes", type=int, default=16)
    p.add_argument("--steps", type=int, default=60)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--m-l", type=int, default=32)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--out-dir", default="toy_run")
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("demo-scene", parents=[common], help="write the synthetic demo room")
    p.add_argument("--out-dir", default="demo")
    p.set_defaults(func=cmd_demo_scene)
    return ap


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            raise UsageError("a subcommand is required")
        doc = args.func(args)
        _emit(doc, args)
        return EXIT_OK
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FloatingPointError, OverflowError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
