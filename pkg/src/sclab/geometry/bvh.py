from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sclab import backend
from sclab.geometry.types import TriangleMesh, as_points

LEAF_SIZE = 4
RAY_TMIN = 1e-9
# fixed non-axis directions used to nudge rays off edges and vertices
_NUDGE = np.array([
    [0.5773502691896258, 0.3090169943749474, 0.7557613140761707],
    [-0.2672612419124244, 0.8017837257372732, 0.5345224838248488],
    [0.8164965809277261, -0.4082482904638631, 0.4082482904638631],
    [0.1825741858350554, 0.3651483716701107, -0.9128709291752769],
])
_SIGN_AXES = np.eye(3)


@dataclass
class RayHit:
    t: float
    triangle: int
    point: np.ndarray
    normal: np.ndarray


class MeshBVH:
    """Bounding-volume hierarchy over the triangles of a mesh.

    Build splits at the centroid median along the longest centroid extent.
    """

    def __init__(self, mesh: TriangleMesh, leaf_size: int = LEAF_SIZE):
        if len(mesh) == 0:
            raise ValueError("mesh has no triangles")
        self.mesh = mesh
        a, b, c = mesh.corners
        cent = (a + b + c) / 3.0
        tmin = np.minimum(np.minimum(a, b), c)
        tmax = np.maximum(np.maximum(a, b), c)
        perm = np.arange(len(mesh), dtype=np.int64)
        bmin, bmax, left, right, start, end = [], [], [], [], [], []

        def build(lo: int, hi: int) -> int:
            node = len(left)
            ids = perm[lo:hi]
            bmin.append(tmin[ids].min(axis=0))
            bmax.append(tmax[ids].max(axis=0))
            left.append(-1)
            right.append(-1)
            start.append(lo)
            end.append(hi)
            if hi - lo <= leaf_size:
                return node
            cc = cent[ids]
            axis = int(np.argmax(cc.max(axis=0) - cc.min(axis=0)))
            order = np.argsort(cc[:, axis], kind="stable")
            perm[lo:hi] = ids[order]
            mid = (hi - lo) // 2
            left[node] = build(lo, lo + mid)
            right[node] = build(lo + mid, hi)
            return node

        build(0, len(mesh))
        self.perm = perm
        self._tris = (np.ascontiguousarray(a[perm]), np.ascontiguousarray(b[perm]),
                      np.ascontiguousarray(c[perm]))
        self._nodes = (
            np.ascontiguousarray(bmin, dtype=np.float64),
            np.ascontiguousarray(bmax, dtype=np.float64),
            np.asarray(left, dtype=np.int64),
            np.asarray(right, dtype=np.int64),
            np.asarray(start, dtype=np.int64),
            np.asarray(end, dtype=np.int64),
        )

    # -- raw batch queries -------------------------------------------------
    def raycast(self, origins, dirs, tmin: float = RAY_TMIN, backend_name: str | None = None):
        """Nearest hit per ray: (t, triangle, u, v); misses give (inf, -1)."""
        o = as_points(origins, name="origins")
        d = as_points(dirs, name="dirs")
        return backend.get(backend_name).bvh_raycast(*self._tris, self.perm, *self._nodes, o, d, float(tmin))

    def parity(self, origins, dirs, backend_name: str | None = None):
        o = as_points(origins, name="origins")
        d = as_points(dirs, name="dirs")
        return backend.get(backend_name).bvh_parity(*self._tris, *self._nodes, o, d)

    def closest(self, points, backend_name: str | None = None):
        """Closest surface point: (squared distance, triangle, point)."""
        p = as_points(points)
        return backend.get(backend_name).bvh_closest(*self._tris, self.perm, *self._nodes, p)

    def unsigned_distance(self, points, backend_name: str | None = None) -> np.ndarray:
        return np.sqrt(self.closest(points, backend_name)[0])

    def inside(self, points, backend_name: str | None = None) -> np.ndarray:
        """Majority vote of three axis-ray parity tests.

        A ray touching an edge or vertex is re-cast with its direction nudged
        by 1e-7 (growing on repeated failure) until the crossing is clean.
        """
        p = as_points(points)
        votes = np.zeros(len(p), dtype=np.int64)
        for axis in _SIGN_AXES:
            dirs = np.repeat(axis[None], len(p), axis=0)
            count, amb = self.parity(p, dirs, backend_name)
            pending = np.flatnonzero(amb)
            attempt = 0
            while len(pending):
                nudge = _NUDGE[attempt % len(_NUDGE)] * 1e-7 * (1 + attempt // len(_NUDGE)) ** 2
                d = axis + nudge
                d = d / np.linalg.norm(d)
                c2, a2 = self.parity(p[pending], np.repeat(d[None], len(pending), axis=0), backend_name)
                count[pending] = c2
                pending = pending[a2.astype(bool)]
                attempt += 1
                if attempt > 64:
                    # only points lying on the surface keep failing; their sign is immaterial
                    break
            votes += count % 2
        return votes >= 2


def ray_cast(bvh: MeshBVH, origin, direction) -> RayHit | None:
    d = np.asarray(direction, dtype=np.float64)
    t, tri, _, _ = bvh.raycast(np.asarray(origin, dtype=np.float64).reshape(1, 3), d.reshape(1, 3))
    if tri[0] < 0:
        return None
    point = np.asarray(origin, dtype=np.float64) + t[0] * d
    return RayHit(float(t[0]), int(tri[0]), point, bvh.mesh.face_normals[tri[0]].copy())


def signed_distance(bvh: MeshBVH, points, backend_name: str | None = None) -> np.ndarray:
    """Signed distance to a watertight mesh, negative inside."""
    if not bvh.mesh.watertight:
        raise ValueError("sign undefined for open mesh")
    p = as_points(points)
    single = np.ndim(points) == 1
    dist = np.sqrt(bvh.closest(p, backend_name)[0])
    on_surface = dist <= 1e-12
    sign = np.ones(len(p))
    todo = ~on_surface
    if np.any(todo):
        sign[todo] = np.where(bvh.inside(p[todo], backend_name), -1.0, 1.0)
    out = sign * dist
    return float(out[0]) if single else out
