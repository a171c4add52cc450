"""Closed, outward-wound primitive meshes used by the demo scene and tests."""
from __future__ import annotations

import numpy as np

from sclab.geometry.types import TriangleMesh

_BOX_FACES = np.array([
    [0, 2, 1], [0, 3, 2],  # -z
    [4, 5, 6], [4, 6, 7],  # +z
    [0, 1, 5], [0, 5, 4],  # -y
    [2, 3, 7], [2, 7, 6],  # +y
    [1, 2, 6], [1, 6, 5],  # +x
    [0, 4, 7], [0, 7, 3],  # -x
])


def box(half_extents=(0.5, 0.5, 0.5), center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    hx, hy, hz = half_extents
    v = np.array([
        [-hx, -hy, -hz], [hx, -hy, -hz], [hx, hy, -hz], [-hx, hy, -hz],
        [-hx, -hy, hz], [hx, -hy, hz], [hx, hy, hz], [-hx, hy, hz],
    ]) + np.asarray(center, dtype=np.float64)
    return TriangleMesh(v, _BOX_FACES.copy())


def box_from_bounds(lo, hi) -> TriangleMesh:
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    v = np.array([[lo[0], lo[1], lo[2]], [hi[0], lo[1], lo[2]], [hi[0], hi[1], lo[2]], [lo[0], hi[1], lo[2]],
                  [lo[0], lo[1], hi[2]], [hi[0], lo[1], hi[2]], [hi[0], hi[1], hi[2]], [lo[0], hi[1], hi[2]]])
    return TriangleMesh(v, _BOX_FACES.copy())


def icosphere(subdivisions: int = 2, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0], [0, -1, t], [0, 1, t],
             [0, -1, -t], [0, 1, -t], [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]]
    faces = [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11], [1, 5, 9], [5, 11, 4],
             [11, 10, 2], [10, 7, 6], [7, 1, 8], [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8],
             [3, 8, 9], [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    verts = [list(np.asarray(v) / np.linalg.norm(v)) for v in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(i: int, j: int) -> int:
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = (np.asarray(verts[i]) + np.asarray(verts[j])) / 2.0
                verts.append(list(m / np.linalg.norm(m)))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = new
    v = np.asarray(verts) * radius + np.asarray(center, dtype=np.float64)
    return TriangleMesh(v, np.asarray(faces))


def extrude_polygon(polygon, height: float, triangles) -> TriangleMesh:
    """Prism over a CCW polygon; ``triangles`` triangulates the polygon (CCW)."""
    poly = np.asarray(polygon, dtype=np.float64)
    n = len(poly)
    v = np.concatenate([np.c_[poly, np.zeros(n)], np.c_[poly, np.full(n, height)]])
    tris = [[c, b, a] for a, b, c in triangles]           # bottom faces down
    tris += [[a + n, b + n, c + n] for a, b, c in triangles]
    for i in range(n):
        j = (i + 1) % n
        tris += [[i, j, j + n], [i, j + n, i + n]]
    return TriangleMesh(v, np.asarray(tris))


def l_shape(size: float = 1.0, height: float = 0.5) -> TriangleMesh:
    """Concave L-shaped prism (2x2 footprint minus one quadrant)."""
    s = size
    poly = [[0, 0], [2 * s, 0], [2 * s, s], [s, s], [s, 2 * s], [0, 2 * s]]
    # fan from the reflex corner (index 3)
    tris = [[3, 4, 5], [3, 5, 0], [3, 0, 1], [3, 1, 2]]
    return extrude_polygon(poly, height, tris)


def cylinder(radius: float = 0.5, height: float = 1.0, segments: int = 24) -> TriangleMesh:
    ang = np.linspace(0.0, 2 * np.pi, segments, endpoint=False)
    poly = np.c_[radius * np.cos(ang), radius * np.sin(ang)]
    poly = np.vstack([poly, [0.0, 0.0]])
    c = segments
    tris = [[c, i, (i + 1) % segments] for i in range(segments)]
    # side walls only along the ring; the center vertex is interior to the caps
    n = len(poly)
    v = np.concatenate([np.c_[poly, np.zeros(n)], np.c_[poly, np.full(n, height)]])
    faces = [[cc, b, a] for a, b, cc in tris] + [[a + n, b + n, cc + n] for a, b, cc in tris]
    for i in range(segments):
        j = (i + 1) % segments
        faces += [[i, j, j + n], [i, j + n, i + n]]
    return TriangleMesh(v, np.asarray(faces))


def room(lo, hi) -> TriangleMesh:
    """Closed box used as a watertight scene background (walls, floor, ceiling)."""
    return box_from_bounds(lo, hi)
