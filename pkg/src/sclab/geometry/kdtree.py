from __future__ import annotations

import numpy as np

from sclab import backend
from sclab.geometry.types import as_points

LEAF_SIZE = 16


class KDTree:
    """Static k-d tree over a 3D point set.

    Queries return the lowest original index among equidistant points, so
    results are bit-identical to a brute-force scan with the same tie rule.

    >>> tree = KDTree([[0, 0, 0], [0, 0, 0]])
    >>> tree.nearest([1, 1, 1])
    (0, 3.0)
    """

    def __init__(self, points, leaf_size: int = LEAF_SIZE, backend_name: str | None = None):
        pts = as_points(points)
        if len(pts) == 0:
            raise ValueError("empty point set")
        self.n = len(pts)
        perm, bmin, bmax, left, right, start, end = backend.get(backend_name).kd_build(
            np.ascontiguousarray(pts), int(leaf_size))
        self.perm = perm
        self.points = np.ascontiguousarray(pts[perm])
        self._arrays = (
            self.points,
            self.perm,
            bmin,
            bmax,
            left,
            right,
            start,
            end,
        )

    def query(self, queries, backend_name: str | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Nearest neighbour of every query row: (indices, squared distances)."""
        q = as_points(queries, name="queries")
        return backend.get(backend_name).kd_nearest(*self._arrays, q)

    def query_knn(self, queries, k: int, backend_name: str | None = None):
        """k nearest neighbours sorted by (distance, index); shape (n, k)."""
        if not 1 <= k <= self.n:
            raise ValueError(f"k must be in [1, {self.n}]")
        q = as_points(queries, name="queries")
        return backend.get(backend_name).kd_knearest(*self._arrays, q, int(k))

    def nearest(self, query) -> tuple[int, float]:
        idx, d2 = self.query(np.asarray(query, dtype=np.float64).reshape(1, 3))
        return int(idx[0]), float(d2[0])


def nearest_neighbor(tree: KDTree, query) -> tuple[int, float]:
    return tree.nearest(query)
