# cython: language_level=3
"""Compiled traversal kernels for the k-d tree and triangle BVH.

Both structures are flattened by the Python builders into arrays:

* ``bmin``/``bmax`` (nodes, 3) node bounds
* ``left``/``right`` child ids, ``-1`` marks a leaf
* ``start``/``end`` half-open range into the leaf-ordered primitive arrays

Every routine here has a line-for-line twin in ``_kernels_py``; keep the
two in sync (the backend tests compare them).
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, fabs, sqrt

cnp.import_array()

DEF STACK_SIZE = 512
DEF BARY_EPS = 1e-9
DEF T_EPS = 1e-12


cdef inline double _box_dist2(const double[:, ::1] bmin, const double[:, ::1] bmax,
                              Py_ssize_t node, double x, double y, double z) noexcept nogil:
    cdef double d = 0.0, e
    e = bmin[node, 0] - x
    if e > 0:
        d += e * e
    else:
        e = x - bmax[node, 0]
        if e > 0:
            d += e * e
    e = bmin[node, 1] - y
    if e > 0:
        d += e * e
    else:
        e = y - bmax[node, 1]
        if e > 0:
            d += e * e
    e = bmin[node, 2] - z
    if e > 0:
        d += e * e
    else:
        e = z - bmax[node, 2]
        if e > 0:
            d += e * e
    return d


def kd_nearest(const double[:, ::1] pts, const long long[::1] perm,
               const double[:, ::1] bmin, const double[:, ::1] bmax,
               const long long[::1] left, const long long[::1] right,
               const long long[::1] start, const long long[::1] end,
               const double[:, ::1] queries):
    cdef Py_ssize_t nq = queries.shape[0]
    out_idx = np.empty(nq, dtype=np.int64)
    out_d2 = np.empty(nq, dtype=np.float64)
    cdef long long[::1] oi = out_idx
    cdef double[::1] od = out_d2
    cdef long long stack[STACK_SIZE]
    cdef Py_ssize_t q, sp, i
    cdef long long node, best_i, pi, a, b
    cdef double x, y, z, best, d, dx, dy, dz, da, db
    with nogil:
        for q in range(nq):
            x = queries[q, 0]
            y = queries[q, 1]
            z = queries[q, 2]
            best = INFINITY
            best_i = -1
            sp = 0
            stack[sp] = 0
            sp += 1
            while sp > 0:
                sp -= 1
                node = stack[sp]
                if _box_dist2(bmin, bmax, node, x, y, z) > best:
                    continue
                if left[node] < 0:
                    for i in range(start[node], end[node]):
                        dx = pts[i, 0] - x
                        dy = pts[i, 1] - y
                        dz = pts[i, 2] - z
                        d = dx * dx + dy * dy + dz * dz
                        pi = perm[i]
                        if d < best or (d == best and pi < best_i):
                            best = d
                            best_i = pi
                    continue
                a = left[node]
                b = right[node]
                da = _box_dist2(bmin, bmax, a, x, y, z)
                db = _box_dist2(bmin, bmax, b, x, y, z)
                # push the farther child first so the nearer one pops next
                if da <= db:
                    if db <= best:
                        stack[sp] = b
                        sp += 1
                    if da <= best:
                        stack[sp] = a
                        sp += 1
                else:
                    if da <= best:
                        stack[sp] = a
                        sp += 1
                    if db <= best:
                        stack[sp] = b
                        sp += 1
            oi[q] = best_i
            od[q] = best
    return out_idx, out_d2


def kd_knearest(const double[:, ::1] pts, const long long[::1] perm,
                const double[:, ::1] bmin, const double[:, ::1] bmax,
                const long long[::1] left, const long long[::1] right,
                const long long[::1] start, const long long[::1] end,
                const double[:, ::1] queries, Py_ssize_t k):
    cdef Py_ssize_t nq = queries.shape[0]
    out_idx = np.full((nq, k), -1, dtype=np.int64)
    out_d2 = np.full((nq, k), np.inf, dtype=np.float64)
    cdef long long[:, ::1] oi = out_idx
    cdef double[:, ::1] od = out_d2
    cdef long long stack[STACK_SIZE]
    cdef Py_ssize_t q, sp, i, j
    cdef long long node, pi, a, b
    cdef double x, y, z, d, dx, dy, dz, da, db, worst
    with nogil:
        for q in range(nq):
            x = queries[q, 0]
            y = queries[q, 1]
            z = queries[q, 2]
            sp = 0
            stack[sp] = 0
            sp += 1
            while sp > 0:
                sp -= 1
                node = stack[sp]
                worst = od[q, k - 1]
                if _box_dist2(bmin, bmax, node, x, y, z) > worst:
                    continue
                if left[node] < 0:
                    for i in range(start[node], end[node]):
                        dx = pts[i, 0] - x
                        dy = pts[i, 1] - y
                        dz = pts[i, 2] - z
                        d = dx * dx + dy * dy + dz * dz
                        pi = perm[i]
                        if d > od[q, k - 1] or (d == od[q, k - 1] and oi[q, k - 1] >= 0 and pi > oi[q, k - 1]):
                            continue
                        # sorted insertion on (d2, index)
                        j = k - 1
                        while j > 0 and (od[q, j - 1] > d or (od[q, j - 1] == d and oi[q, j - 1] > pi)):
                            od[q, j] = od[q, j - 1]
                            oi[q, j] = oi[q, j - 1]
                            j -= 1
                        od[q, j] = d
                        oi[q, j] = pi
                    continue
                worst = od[q, k - 1]
                a = left[node]
                b = right[node]
                da = _box_dist2(bmin, bmax, a, x, y, z)
                db = _box_dist2(bmin, bmax, b, x, y, z)
                if da <= db:
                    if db <= worst:
                        stack[sp] = b
                        sp += 1
                    if da <= worst:
                        stack[sp] = a
                        sp += 1
                else:
                    if da <= worst:
                        stack[sp] = a
                        sp += 1
                    if db <= worst:
                        stack[sp] = b
                        sp += 1
    return out_idx, out_d2


cdef inline bint _ray_box(const double[:, ::1] bmin, const double[:, ::1] bmax, Py_ssize_t node,
                          double ox, double oy, double oz, double dx, double dy, double dz,
                          double tmax) noexcept nogil:
    cdef double t0 = 0.0, t1 = tmax, ta, tb, tmp
    cdef double o[3]
    cdef double d[3]
    cdef int ax
    o[0] = ox; o[1] = oy; o[2] = oz
    d[0] = dx; d[1] = dy; d[2] = dz
    for ax in range(3):
        if d[ax] == 0.0:
            if o[ax] < bmin[node, ax] or o[ax] > bmax[node, ax]:
                return False
            continue
        ta = (bmin[node, ax] - o[ax]) / d[ax]
        tb = (bmax[node, ax] - o[ax]) / d[ax]
        if ta > tb:
            tmp = ta; ta = tb; tb = tmp
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
        # slack keeps rays grazing a flat box (zero extent) alive
        if t0 > t1 * (1.0 + 1e-12) + 1e-12:
            return False
    return True


cdef inline int _moller(const double[:, ::1] v0, const double[:, ::1] v1, const double[:, ::1] v2,
                        Py_ssize_t i, double ox, double oy, double oz,
                        double dx, double dy, double dz,
                        double *t, double *u, double *v) noexcept nogil:
    """Returns 0 when the ray's line misses the triangle plane."""
    cdef double e1x = v1[i, 0] - v0[i, 0], e1y = v1[i, 1] - v0[i, 1], e1z = v1[i, 2] - v0[i, 2]
    cdef double e2x = v2[i, 0] - v0[i, 0], e2y = v2[i, 1] - v0[i, 1], e2z = v2[i, 2] - v0[i, 2]
    cdef double px = dy * e2z - dz * e2y
    cdef double py = dz * e2x - dx * e2z
    cdef double pz = dx * e2y - dy * e2x
    cdef double det = e1x * px + e1y * py + e1z * pz
    if det == 0.0:
        return 0
    cdef double inv = 1.0 / det
    cdef double tx = ox - v0[i, 0], ty = oy - v0[i, 1], tz = oz - v0[i, 2]
    u[0] = (tx * px + ty * py + tz * pz) * inv
    cdef double qx = ty * e1z - tz * e1y
    cdef double qy = tz * e1x - tx * e1z
    cdef double qz = tx * e1y - ty * e1x
    v[0] = (dx * qx + dy * qy + dz * qz) * inv
    t[0] = (e2x * qx + e2y * qy + e2z * qz) * inv
    return 1


def bvh_raycast(const double[:, ::1] v0, const double[:, ::1] v1, const double[:, ::1] v2,
                const long long[::1] tri_ids,
                const double[:, ::1] bmin, const double[:, ::1] bmax,
                const long long[::1] left, const long long[::1] right,
                const long long[::1] start, const long long[::1] end,
                const double[:, ::1] origins, const double[:, ::1] dirs, double tmin):
    cdef Py_ssize_t nr = origins.shape[0]
    out_t = np.full(nr, np.inf)
    out_tri = np.full(nr, -1, dtype=np.int64)
    out_u = np.zeros(nr)
    out_v = np.zeros(nr)
    cdef double[::1] ot = out_t, ou = out_u, ov = out_v
    cdef long long[::1] otri = out_tri
    cdef long long stack[STACK_SIZE]
    cdef Py_ssize_t r, sp, i
    cdef long long node, tid, best_tri
    cdef double ox, oy, oz, dx, dy, dz, best, t, u, v, bu, bv
    with nogil:
        for r in range(nr):
            ox = origins[r, 0]; oy = origins[r, 1]; oz = origins[r, 2]
            dx = dirs[r, 0]; dy = dirs[r, 1]; dz = dirs[r, 2]
            best = INFINITY
            best_tri = -1
            bu = 0.0
            bv = 0.0
            sp = 0
            stack[sp] = 0
            sp += 1
            while sp > 0:
                sp -= 1
                node = stack[sp]
                if not _ray_box(bmin, bmax, node, ox, oy, oz, dx, dy, dz, best):
                    continue
                if left[node] < 0:
                    for i in range(start[node], end[node]):
                        if not _moller(v0, v1, v2, i, ox, oy, oz, dx, dy, dz, &t, &u, &v):
                            continue
                        if u < 0.0 or v < 0.0 or u + v > 1.0 or t <= tmin:
                            continue
                        tid = tri_ids[i]
                        if t < best or (t == best and tid < best_tri):
                            best = t
                            best_tri = tid
                            bu = u
                            bv = v
                    continue
                stack[sp] = right[node]
                sp += 1
                stack[sp] = left[node]
                sp += 1
            ot[r] = best
            otri[r] = best_tri
            ou[r] = bu
            ov[r] = bv
    return out_t, out_tri, out_u, out_v


def bvh_parity(const double[:, ::1] v0, const double[:, ::1] v1, const double[:, ::1] v2,
               const double[:, ::1] bmin, const double[:, ::1] bmax,
               const long long[::1] left, const long long[::1] right,
               const long long[::1] start, const long long[::1] end,
               const double[:, ::1] origins, const double[:, ::1] dirs):
    """Count forward crossings; flag rays that touch an edge, vertex or start on the surface."""
    cdef Py_ssize_t nr = origins.shape[0]
    out_n = np.zeros(nr, dtype=np.int64)
    out_amb = np.zeros(nr, dtype=np.uint8)
    cdef long long[::1] on = out_n
    cdef unsigned char[::1] oa = out_amb
    cdef long long stack[STACK_SIZE]
    cdef Py_ssize_t r, sp, i
    cdef long long node, count
    cdef unsigned char amb
    cdef double ox, oy, oz, dx, dy, dz, t, u, v
    with nogil:
        for r in range(nr):
            ox = origins[r, 0]; oy = origins[r, 1]; oz = origins[r, 2]
            dx = dirs[r, 0]; dy = dirs[r, 1]; dz = dirs[r, 2]
            count = 0
            amb = 0
            sp = 0
            stack[sp] = 0
            sp += 1
            while sp > 0 and not amb:
                sp -= 1
                node = stack[sp]
                if not _ray_box(bmin, bmax, node, ox, oy, oz, dx, dy, dz, INFINITY):
                    continue
                if left[node] < 0:
                    for i in range(start[node], end[node]):
                        if not _moller(v0, v1, v2, i, ox, oy, oz, dx, dy, dz, &t, &u, &v):
                            continue
                        if u < -BARY_EPS or v < -BARY_EPS or u + v > 1.0 + BARY_EPS or t < -T_EPS:
                            continue
                        if t <= T_EPS or u < BARY_EPS or v < BARY_EPS or u + v > 1.0 - BARY_EPS:
                            amb = 1
                            break
                        count += 1
                    continue
                stack[sp] = right[node]
                sp += 1
                stack[sp] = left[node]
                sp += 1
            on[r] = count
            oa[r] = amb
    return out_n, out_amb


cdef inline double _closest_on_tri(double px, double py, double pz,
                                   double ax, double ay, double az,
                                   double bx, double by, double bz,
                                   double cx, double cy, double cz,
                                   double *qx, double *qy, double *qz) noexcept nogil:
    # Voronoi-region walk, returns squared distance
    cdef double abx = bx - ax, aby = by - ay, abz = bz - az
    cdef double acx = cx - ax, acy = cy - ay, acz = cz - az
    cdef double apx = px - ax, apy = py - ay, apz = pz - az
    cdef double d1 = abx * apx + aby * apy + abz * apz
    cdef double d2 = acx * apx + acy * apy + acz * apz
    cdef double bpx, bpy, bpz, cpx, cpy, cpz, d3, d4, d5, d6, va, vb, vc, s, w, denom
    cdef double rx, ry, rz
    if d1 <= 0.0 and d2 <= 0.0:
        rx = ax; ry = ay; rz = az
    else:
        bpx = px - bx; bpy = py - by; bpz = pz - bz
        d3 = abx * bpx + aby * bpy + abz * bpz
        d4 = acx * bpx + acy * bpy + acz * bpz
        if d3 >= 0.0 and d4 <= d3:
            rx = bx; ry = by; rz = bz
        else:
            vc = d1 * d4 - d3 * d2
            if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
                s = d1 / (d1 - d3)
                rx = ax + s * abx; ry = ay + s * aby; rz = az + s * abz
            else:
                cpx = px - cx; cpy = py - cy; cpz = pz - cz
                d5 = abx * cpx + aby * cpy + abz * cpz
                d6 = acx * cpx + acy * cpy + acz * cpz
                if d6 >= 0.0 and d5 <= d6:
                    rx = cx; ry = cy; rz = cz
                else:
                    vb = d5 * d2 - d1 * d6
                    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
                        w = d2 / (d2 - d6)
                        rx = ax + w * acx; ry = ay + w * acy; rz = az + w * acz
                    else:
                        va = d3 * d6 - d5 * d4
                        if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
                            w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
                            rx = bx + w * (cx - bx); ry = by + w * (cy - by); rz = bz + w * (cz - bz)
                        else:
                            denom = 1.0 / (va + vb + vc)
                            s = vb * denom
                            w = vc * denom
                            rx = ax + abx * s + acx * w
                            ry = ay + aby * s + acy * w
                            rz = az + abz * s + acz * w
    qx[0] = rx; qy[0] = ry; qz[0] = rz
    rx = px - rx; ry = py - ry; rz = pz - rz
    return rx * rx + ry * ry + rz * rz


def bvh_closest(const double[:, ::1] v0, const double[:, ::1] v1, const double[:, ::1] v2,
                const long long[::1] tri_ids,
                const double[:, ::1] bmin, const double[:, ::1] bmax,
                const long long[::1] left, const long long[::1] right,
                const long long[::1] start, const long long[::1] end,
                const double[:, ::1] points):
    cdef Py_ssize_t n = points.shape[0]
    out_d2 = np.empty(n)
    out_tri = np.empty(n, dtype=np.int64)
    out_cp = np.empty((n, 3))
    cdef double[::1] od = out_d2
    cdef long long[::1] otri = out_tri
    cdef double[:, ::1] ocp = out_cp
    cdef long long stack[STACK_SIZE]
    cdef Py_ssize_t q, sp, i
    cdef long long node, tid, best_tri, a, b
    cdef double x, y, z, best, d, qx, qy, qz, bx, by, bz, da, db
    with nogil:
        for q in range(n):
            x = points[q, 0]; y = points[q, 1]; z = points[q, 2]
            best = INFINITY
            best_tri = -1
            bx = 0.0; by = 0.0; bz = 0.0
            sp = 0
            stack[sp] = 0
            sp += 1
            while sp > 0:
                sp -= 1
                node = stack[sp]
                if _box_dist2(bmin, bmax, node, x, y, z) > best:
                    continue
                if left[node] < 0:
                    for i in range(start[node], end[node]):
                        d = _closest_on_tri(x, y, z,
                                            v0[i, 0], v0[i, 1], v0[i, 2],
                                            v1[i, 0], v1[i, 1], v1[i, 2],
                                            v2[i, 0], v2[i, 1], v2[i, 2],
                                            &qx, &qy, &qz)
                        tid = tri_ids[i]
                        if d < best or (d == best and tid < best_tri):
                            best = d
                            best_tri = tid
                            bx = qx; by = qy; bz = qz
                    continue
                a = left[node]
                b = right[node]
                da = _box_dist2(bmin, bmax, a, x, y, z)
                db = _box_dist2(bmin, bmax, b, x, y, z)
                if da <= db:
                    if db <= best:
                        stack[sp] = b
                        sp += 1
                    if da <= best:
                        stack[sp] = a
                        sp += 1
                else:
                    if da <= best:
                        stack[sp] = a
                        sp += 1
                    if db <= best:
                        stack[sp] = b
                        sp += 1
            od[q] = best
            otri[q] = best_tri
            ocp[q, 0] = bx; ocp[q, 1] = by; ocp[q, 2] = bz
    return out_d2, out_tri, out_cp


cdef void _merge_sort(long long[::1] perm, long long[::1] tmp, const double[:, ::1] pts, int axis,
                      Py_ssize_t lo, Py_ssize_t hi) noexcept nogil:
    # stable: on equal keys the left run wins, like numpy's stable argsort
    cdef Py_ssize_t mid, i, j, k
    if hi - lo < 2:
        return
    mid = lo + (hi - lo) // 2
    _merge_sort(perm, tmp, pts, axis, lo, mid)
    _merge_sort(perm, tmp, pts, axis, mid, hi)
    i = lo
    j = mid
    k = lo
    while i < mid and j < hi:
        if pts[perm[j], axis] < pts[perm[i], axis]:
            tmp[k] = perm[j]
            j += 1
        else:
            tmp[k] = perm[i]
            i += 1
        k += 1
    while i < mid:
        tmp[k] = perm[i]
        i += 1
        k += 1
    while j < hi:
        tmp[k] = perm[j]
        j += 1
        k += 1
    for k in range(lo, hi):
        perm[k] = tmp[k]


cdef Py_ssize_t _kd_build_node(const double[:, ::1] pts, long long[::1] perm, long long[::1] tmp,
                               double[:, ::1] bmin, double[:, ::1] bmax,
                               long long[::1] left, long long[::1] right,
                               long long[::1] start, long long[::1] end,
                               Py_ssize_t* count, Py_ssize_t lo, Py_ssize_t hi,
                               Py_ssize_t leaf_size) noexcept nogil:
    cdef Py_ssize_t node = count[0]
    cdef Py_ssize_t i, c, mid
    cdef int axis
    cdef double ext, best, v
    count[0] += 1
    for c in range(3):
        bmin[node, c] = INFINITY
        bmax[node, c] = -INFINITY
    for i in range(lo, hi):
        for c in range(3):
            v = pts[perm[i], c]
            if v < bmin[node, c]:
                bmin[node, c] = v
            if v > bmax[node, c]:
                bmax[node, c] = v
    left[node] = -1
    right[node] = -1
    start[node] = lo
    end[node] = hi
    if hi - lo <= leaf_size:
        return node
    axis = 0
    best = bmax[node, 0] - bmin[node, 0]
    for c in range(1, 3):
        ext = bmax[node, c] - bmin[node, c]
        if ext > best:
            best = ext
            axis = c
    mid = (hi - lo) // 2
    _merge_sort(perm, tmp, pts, axis, lo, hi)
    left[node] = _kd_build_node(pts, perm, tmp, bmin, bmax, left, right, start, end,
                                count, lo, lo + mid, leaf_size)
    right[node] = _kd_build_node(pts, perm, tmp, bmin, bmax, left, right, start, end,
                                 count, lo + mid, hi, leaf_size)
    return node


def kd_build(const double[:, ::1] pts, Py_ssize_t leaf_size):
    """Median split on the widest axis; returns (perm, bmin, bmax, left, right, start, end)."""
    cdef Py_ssize_t n = pts.shape[0]
    cdef Py_ssize_t cap = 2 * n + 1
    cdef Py_ssize_t count = 0
    perm_a = np.arange(n, dtype=np.int64)
    tmp_a = np.empty(n, dtype=np.int64)
    bmin_a = np.empty((cap, 3), dtype=np.float64)
    bmax_a = np.empty((cap, 3), dtype=np.float64)
    left_a = np.empty(cap, dtype=np.int64)
    right_a = np.empty(cap, dtype=np.int64)
    start_a = np.empty(cap, dtype=np.int64)
    end_a = np.empty(cap, dtype=np.int64)
    cdef long long[::1] perm = perm_a
    cdef long long[::1] tmp = tmp_a
    cdef double[:, ::1] bmin = bmin_a
    cdef double[:, ::1] bmax = bmax_a
    cdef long long[::1] left = left_a
    cdef long long[::1] right = right_a
    cdef long long[::1] start = start_a
    cdef long long[::1] end = end_a
    with nogil:
        _kd_build_node(pts, perm, tmp, bmin, bmax, left, right, start, end, &count, 0, n, leaf_size)
    return (perm_a, bmin_a[:count].copy(), bmax_a[:count].copy(), left_a[:count].copy(),
            right_a[:count].copy(), start_a[:count].copy(), end_a[:count].copy())
