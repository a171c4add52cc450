"""Pure-Python twin of ``_kernels.pyx``.

Same array layout, same traversal order and the same floating-point
expression order, so results match the compiled core exactly. Used when
the extension is not built or ``SCLAB_BACKEND=python`` is set.
"""
from __future__ import annotations

import math

import numpy as np

BARY_EPS = 1e-9
T_EPS = 1e-12
INF = math.inf


def _box_dist2(bmin, bmax, node, x, y, z):
    lo = bmin[node]
    hi = bmax[node]
    d = 0.0
    e = lo[0] - x
    if e > 0:
        d += e * e
    else:
        e = x - hi[0]
        if e > 0:
            d += e * e
    e = lo[1] - y
    if e > 0:
        d += e * e
    else:
        e = y - hi[1]
        if e > 0:
            d += e * e
    e = lo[2] - z
    if e > 0:
        d += e * e
    else:
        e = z - hi[2]
        if e > 0:
            d += e * e
    return d


def _tree_lists(bmin, bmax, left, right, start, end):
    return bmin.tolist(), bmax.tolist(), left.tolist(), right.tolist(), start.tolist(), end.tolist()


def kd_nearest(pts, perm, bmin, bmax, left, right, start, end, queries):
    P = pts.tolist()
    perm = perm.tolist()
    bmin, bmax, left, right, start, end = _tree_lists(bmin, bmax, left, right, start, end)
    out_idx = np.empty(len(queries), dtype=np.int64)
    out_d2 = np.empty(len(queries))
    for q, (x, y, z) in enumerate(queries.tolist()):
        best = INF
        best_i = -1
        stack = [0]
        while stack:
            node = stack.pop()
            if _box_dist2(bmin, bmax, node, x, y, z) > best:
                continue
            if left[node] < 0:
                for i in range(start[node], end[node]):
                    p = P[i]
                    dx = p[0] - x
                    dy = p[1] - y
                    dz = p[2] - z
                    d = dx * dx + dy * dy + dz * dz
                    pi = perm[i]
                    if d < best or (d == best and pi < best_i):
                        best = d
                        best_i = pi
                continue
            a, b = left[node], right[node]
            da = _box_dist2(bmin, bmax, a, x, y, z)
            db = _box_dist2(bmin, bmax, b, x, y, z)
            if da <= db:
                if db <= best:
                    stack.append(b)
                if da <= best:
                    stack.append(a)
            else:
                if da <= best:
                    stack.append(a)
                if db <= best:
                    stack.append(b)
        out_idx[q] = best_i
        out_d2[q] = best
    return out_idx, out_d2


def kd_knearest(pts, perm, bmin, bmax, left, right, start, end, queries, k):
    P = pts.tolist()
    perm = perm.tolist()
    bmin, bmax, left, right, start, end = _tree_lists(bmin, bmax, left, right, start, end)
    out_idx = np.full((len(queries), k), -1, dtype=np.int64)
    out_d2 = np.full((len(queries), k), np.inf)
    for q, (x, y, z) in enumerate(queries.tolist()):
        od = [INF] * k
        oi = [-1] * k
        stack = [0]
        while stack:
            node = stack.pop()
            if _box_dist2(bmin, bmax, node, x, y, z) > od[k - 1]:
                continue
            if left[node] < 0:
                for i in range(start[node], end[node]):
                    p = P[i]
                    dx = p[0] - x
                    dy = p[1] - y
                    dz = p[2] - z
                    d = dx * dx + dy * dy + dz * dz
                    pi = perm[i]
                    if d > od[k - 1] or (d == od[k - 1] and oi[k - 1] >= 0 and pi > oi[k - 1]):
                        continue
                    j = k - 1
                    while j > 0 and (od[j - 1] > d or (od[j - 1] == d and oi[j - 1] > pi)):
                        od[j] = od[j - 1]
                        oi[j] = oi[j - 1]
                        j -= 1
                    od[j] = d
                    oi[j] = pi
                continue
            worst = od[k - 1]
            a, b = left[node], right[node]
            da = _box_dist2(bmin, bmax, a, x, y, z)
            db = _box_dist2(bmin, bmax, b, x, y, z)
            if da <= db:
                if db <= worst:
                    stack.append(b)
                if da <= worst:
                    stack.append(a)
            else:
                if da <= worst:
                    stack.append(a)
                if db <= worst:
                    stack.append(b)
        out_idx[q] = oi
        out_d2[q] = od
    return out_idx, out_d2


def _ray_box(bmin, bmax, node, o, d, tmax):
    t0 = 0.0
    t1 = tmax
    lo = bmin[node]
    hi = bmax[node]
    for ax in range(3):
        if d[ax] == 0.0:
            if o[ax] < lo[ax] or o[ax] > hi[ax]:
                return False
            continue
        ta = (lo[ax] - o[ax]) / d[ax]
        tb = (hi[ax] - o[ax]) / d[ax]
        if ta > tb:
            ta, tb = tb, ta
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
        if t0 > t1 * (1.0 + 1e-12) + 1e-12:
            return False
    return True


def _moller(a, b, c, o, d):
    ox, oy, oz = o
    dx, dy, dz = d
    e1x = b[0] - a[0]
    e1y = b[1] - a[1]
    e1z = b[2] - a[2]
    e2x = c[0] - a[0]
    e2y = c[1] - a[1]
    e2z = c[2] - a[2]
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if det == 0.0:
        return None
    inv = 1.0 / det
    tx = ox - a[0]
    ty = oy - a[1]
    tz = oz - a[2]
    u = (tx * px + ty * py + tz * pz) * inv
    qx = ty * e1z - tz * e1y
    qy = tz * e1x - tx * e1z
    qz = tx * e1y - ty * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    return t, u, v


def bvh_raycast(v0, v1, v2, tri_ids, bmin, bmax, left, right, start, end, origins, dirs, tmin):
    A, B, C = v0.tolist(), v1.tolist(), v2.tolist()
    ids = tri_ids.tolist()
    bmin, bmax, left, right, start, end = _tree_lists(bmin, bmax, left, right, start, end)
    n = len(origins)
    out_t = np.full(n, np.inf)
    out_tri = np.full(n, -1, dtype=np.int64)
    out_u = np.zeros(n)
    out_v = np.zeros(n)
    for r, (o, d) in enumerate(zip(origins.tolist(), dirs.tolist())):
        best = INF
        best_tri = -1
        bu = bv = 0.0
        stack = [0]
        while stack:
            node = stack.pop()
            if not _ray_box(bmin, bmax, node, o, d, best):
                continue
            if left[node] < 0:
                for i in range(start[node], end[node]):
                    hit = _moller(A[i], B[i], C[i], o, d)
                    if hit is None:
                        continue
                    t, u, v = hit
                    if u < 0.0 or v < 0.0 or u + v > 1.0 or t <= tmin:
                        continue
                    tid = ids[i]
                    if t < best or (t == best and tid < best_tri):
                        best, best_tri, bu, bv = t, tid, u, v
                continue
            stack.append(right[node])
            stack.append(left[node])
        out_t[r] = best
        out_tri[r] = best_tri
        out_u[r] = bu
        out_v[r] = bv
    return out_t, out_tri, out_u, out_v


def bvh_parity(v0, v1, v2, bmin, bmax, left, right, start, end, origins, dirs):
    A, B, C = v0.tolist(), v1.tolist(), v2.tolist()
    bmin, bmax, left, right, start, end = _tree_lists(bmin, bmax, left, right, start, end)
    n = len(origins)
    out_n = np.zeros(n, dtype=np.int64)
    out_amb = np.zeros(n, dtype=np.uint8)
    for r, (o, d) in enumerate(zip(origins.tolist(), dirs.tolist())):
        count = 0
        amb = False
        stack = [0]
        while stack and not amb:
            node = stack.pop()
            if not _ray_box(bmin, bmax, node, o, d, INF):
                continue
            if left[node] < 0:
                for i in range(start[node], end[node]):
                    hit = _moller(A[i], B[i], C[i], o, d)
                    if hit is None:
                        continue
                    t, u, v = hit
                    if u < -BARY_EPS or v < -BARY_EPS or u + v > 1.0 + BARY_EPS or t < -T_EPS:
                        continue
                    if t <= T_EPS or u < BARY_EPS or v < BARY_EPS or u + v > 1.0 - BARY_EPS:
                        amb = True
                        break
                    count += 1
                continue
            stack.append(right[node])
            stack.append(left[node])
        out_n[r] = count
        out_amb[r] = amb
    return out_n, out_amb


def _closest_on_tri(p, a, b, c):
    px, py, pz = p
    ax, ay, az = a
    bx, by, bz = b
    cx, cy, cz = c
    abx, aby, abz = bx - ax, by - ay, bz - az
    acx, acy, acz = cx - ax, cy - ay, cz - az
    apx, apy, apz = px - ax, py - ay, pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        r = (ax, ay, az)
    else:
        bpx, bpy, bpz = px - bx, py - by, pz - bz
        d3 = abx * bpx + aby * bpy + abz * bpz
        d4 = acx * bpx + acy * bpy + acz * bpz
        if d3 >= 0.0 and d4 <= d3:
            r = (bx, by, bz)
        else:
            vc = d1 * d4 - d3 * d2
            if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
                s = d1 / (d1 - d3)
                r = (ax + s * abx, ay + s * aby, az + s * abz)
            else:
                cpx, cpy, cpz = px - cx, py - cy, pz - cz
                d5 = abx * cpx + aby * cpy + abz * cpz
                d6 = acx * cpx + acy * cpy + acz * cpz
                if d6 >= 0.0 and d5 <= d6:
                    r = (cx, cy, cz)
                else:
                    vb = d5 * d2 - d1 * d6
                    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
                        w = d2 / (d2 - d6)
                        r = (ax + w * acx, ay + w * acy, az + w * acz)
                    else:
                        va = d3 * d6 - d5 * d4
                        if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
                            w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
                            r = (bx + w * (cx - bx), by + w * (cy - by), bz + w * (cz - bz))
                        else:
                            denom = 1.0 / (va + vb + vc)
                            s = vb * denom
                            w = vc * denom
                            r = (ax + abx * s + acx * w, ay + aby * s + acy * w, az + abz * s + acz * w)
    rx, ry, rz = px - r[0], py - r[1], pz - r[2]
    return rx * rx + ry * ry + rz * rz, r


def bvh_closest(v0, v1, v2, tri_ids, bmin, bmax, left, right, start, end, points):
    A, B, C = v0.tolist(), v1.tolist(), v2.tolist()
    ids = tri_ids.tolist()
    bmin, bmax, left, right, start, end = _tree_lists(bmin, bmax, left, right, start, end)
    n = len(points)
    out_d2 = np.empty(n)
    out_tri = np.empty(n, dtype=np.int64)
    out_cp = np.empty((n, 3))
    for q, p in enumerate(points.tolist()):
        x, y, z = p
        best = INF
        best_tri = -1
        best_cp = (0.0, 0.0, 0.0)
        stack = [0]
        while stack:
            node = stack.pop()
            if _box_dist2(bmin, bmax, node, x, y, z) > best:
                continue
            if left[node] < 0:
                for i in range(start[node], end[node]):
                    d, cp = _closest_on_tri(p, A[i], B[i], C[i])
                    tid = ids[i]
                    if d < best or (d == best and tid < best_tri):
                        best, best_tri, best_cp = d, tid, cp
                continue
            a, b = left[node], right[node]
            da = _box_dist2(bmin, bmax, a, x, y, z)
            db = _box_dist2(bmin, bmax, b, x, y, z)
            if da <= db:
                if db <= best:
                    stack.append(b)
                if da <= best:
                    stack.append(a)
            else:
                if da <= best:
                    stack.append(a)
                if db <= best:
                    stack.append(b)
        out_d2[q] = best
        out_tri[q] = best_tri
        out_cp[q] = best_cp
    return out_d2, out_tri, out_cp


def kd_build(pts, leaf_size):
    """Median split on the widest axis; returns (perm, bmin, bmax, left, right, start, end)."""
    n = len(pts)
    perm = np.arange(n, dtype=np.int64)
    bmin, bmax, left, right, start, end = [], [], [], [], [], []

    def build(lo, hi):
        node = len(left)
        chunk = pts[perm[lo:hi]]
        bmin.append(chunk.min(axis=0))
        bmax.append(chunk.max(axis=0))
        left.append(-1)
        right.append(-1)
        start.append(lo)
        end.append(hi)
        if hi - lo <= leaf_size:
            return node
        axis = int(np.argmax(bmax[node] - bmin[node]))
        mid = (hi - lo) // 2
        order = np.argsort(chunk[:, axis], kind="stable")
        perm[lo:hi] = perm[lo:hi][order]
        left[node] = build(lo, lo + mid)
        right[node] = build(lo + mid, hi)
        return node

    build(0, n)
    return (perm, np.asarray(bmin, dtype=np.float64).reshape(-1, 3), np.asarray(bmax, dtype=np.float64).reshape(-1, 3),
            np.asarray(left, dtype=np.int64), np.asarray(right, dtype=np.int64),
            np.asarray(start, dtype=np.int64), np.asarray(end, dtype=np.int64))
