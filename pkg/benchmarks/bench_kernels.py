"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py --points 20000 --queries 2000 --repeat 3
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from sclab import backend
from sclab.geometry.bvh import MeshBVH
from sclab.geometry.kdtree import KDTree
from sclab.geometry.primitives import icosphere


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(args, rng):
    pts = rng.normal(size=(args.points, 3))
    q = rng.normal(size=(args.queries, 3))
    mesh = icosphere(args.subdiv)
    bvh = MeshBVH(mesh)
    o = rng.uniform(-1.5, 1.5, (args.queries, 3))
    d = rng.normal(size=(args.queries, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    trees = {}

    def tree(name):
        if name not in trees:
            trees[name] = KDTree(pts, backend_name=name)
        return trees[name]

    return {
        "kd_build": lambda name: KDTree(pts, backend_name=name),
        "kd_nearest": lambda name: tree(name).query(q, backend_name=name),
        "kd_knn8": lambda name: tree(name).query_knn(q, 8, backend_name=name),
        "bvh_raycast": lambda name: bvh.raycast(o, d, backend_name=name),
        "bvh_closest": lambda name: bvh.closest(o, backend_name=name),
        "bvh_inside": lambda name: bvh.inside(o, backend_name=name),
    }, len(mesh.triangles)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=20000)
    ap.add_argument("--queries", type=int, default=2000)
    ap.add_argument("--subdiv", type=int, default=3, help="icosphere subdivision level for BVH cases")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    names = backend.available()
    table, n_tris = cases(args, np.random.default_rng(args.seed))
    print(f"points={args.points} queries={args.queries} triangles={n_tris} backends={','.join(names)}")
    print(f"{'kernel':<12}" + "".join(f"{n:>12}" for n in names) + (f"{'speedup':>10}" if len(names) > 1 else ""))
    for kernel, fn in table.items():
        for name in names:
            fn(name)  # warm-up and cache fill
        t = [best_of(lambda: fn(name), args.repeat) for name in names]
        row = f"{kernel:<12}" + "".join(f"{x * 1e3:>10.2f}ms" for x in t)
        if len(t) > 1:
            row += f"{t[1] / t[0]:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
