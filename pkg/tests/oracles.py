"""Independent brute-force references used by the tests.

Nothing here imports the kernels under test; each routine is written a
different way from the package (plane projection instead of Voronoi regions,
plane-equation ray hits instead of Moller-Trumbore, dense loops instead of
trees).
"""
from __future__ import annotations

import numpy as np


def brute_nn(P, Q):
    """(index, squared distance) of the nearest Q row for each P row; lowest index on ties."""
    P = np.asarray(P, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    d2 = ((P[:, None, :] - Q[None, :, :]) ** 2).sum(axis=2)
    idx = np.argmin(d2, axis=1)
    return idx, d2[np.arange(len(P)), idx]


def brute_knn(P, Q, k):
    P = np.asarray(P, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    d2 = ((P[:, None, :] - Q[None, :, :]) ** 2).sum(axis=2)
    order = np.lexsort((np.broadcast_to(np.arange(len(Q)), d2.shape), d2), axis=1)[:, :k]
    return order, np.take_along_axis(d2, order, axis=1)


def brute_chamfer(P, Q):
    return brute_nn(P, Q)[1].mean() + brute_nn(Q, P)[1].mean()


def brute_one_sided(P, Q):
    return brute_nn(P, Q)[1].mean()


def brute_uhd(P, Q):
    return np.sqrt(brute_nn(P, Q)[1].max())


def _segment_dist2(p, a, b):
    ab = b - a
    t = np.clip(((p - a) * ab).sum(-1) / np.maximum((ab * ab).sum(-1), 1e-300), 0.0, 1.0)
    c = a + t[..., None] * ab
    return ((p - c) ** 2).sum(-1)


def point_triangle_dist2(points, a, b, c):
    """(n_points, n_tris) squared distances via plane projection + edge fallback."""
    p = np.asarray(points, dtype=np.float64)[:, None, :]
    a, b, c = a[None], b[None], c[None]
    n = np.cross(b - a, c - a)
    n = n / np.linalg.norm(n, axis=-1, keepdims=True)
    h = ((p - a) * n).sum(-1)
    q = p - h[..., None] * n
    # inside test by signs of the three sub-triangle normals
    s1 = (np.cross(b - a, q - a) * n).sum(-1)
    s2 = (np.cross(c - b, q - b) * n).sum(-1)
    s3 = (np.cross(a - c, q - c) * n).sum(-1)
    inside = (s1 >= 0) & (s2 >= 0) & (s3 >= 0)
    edge = np.minimum(np.minimum(_segment_dist2(p, a, b), _segment_dist2(p, b, c)), _segment_dist2(p, c, a))
    return np.where(inside, h * h, edge)


def mesh_unsigned_distance(points, mesh, chunk: int = 512):
    a, b, c = (mesh.vertices[mesh.triangles[:, k]] for k in range(3))
    pts = np.asarray(points, dtype=np.float64)
    out = np.empty(len(pts))
    for s in range(0, len(pts), chunk):
        out[s:s + chunk] = np.sqrt(point_triangle_dist2(pts[s:s + chunk], a, b, c).min(axis=1))
    return out


def ray_triangle_hits(o, d, mesh):
    """All (t, tri) hits of one ray, by plane intersection and barycentric solve."""
    a, b, c = (mesh.vertices[mesh.triangles[:, k]] for k in range(3))
    n = np.cross(b - a, c - a)
    denom = n @ d
    with np.errstate(divide="ignore", invalid="ignore"):
        t = ((a - o) * n).sum(1) / denom
    q = o + t[:, None] * d
    # barycentric via solving the 2x2 normal equations
    e1, e2, w = b - a, c - a, q - a
    d11, d12, d22 = (e1 * e1).sum(1), (e1 * e2).sum(1), (e2 * e2).sum(1)
    w1, w2 = (w * e1).sum(1), (w * e2).sum(1)
    det = d11 * d22 - d12 * d12
    with np.errstate(divide="ignore", invalid="ignore"):
        u = (d22 * w1 - d12 * w2) / det
        v = (d11 * w2 - d12 * w1) / det
    ok = (np.abs(denom) > 1e-15) & (t > 0) & (u >= 0) & (v >= 0) & (u + v <= 1)
    return t[ok], np.flatnonzero(ok), u[ok], v[ok]


def random_ray_inside(points, mesh, rng, margin: float = 1e-7):
    """Point-in-mesh by crossing parity along one random direction per point.

    A ray that grazes an edge (barycentric within ``margin`` of the border) is
    redrawn, so every returned parity comes from clean crossings.
    """
    out = np.zeros(len(points), dtype=bool)
    for i, p in enumerate(np.asarray(points, dtype=np.float64)):
        while True:
            d = rng.normal(size=3)
            d /= np.linalg.norm(d)
            t, _, u, v = ray_triangle_hits(p, d, mesh)
            if np.all((u > margin) & (v > margin) & (1 - u - v > margin)):
                out[i] = len(t) % 2 == 1
                break
    return out
