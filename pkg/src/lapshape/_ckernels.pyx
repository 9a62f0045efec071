# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-point assembly kernels.

Operation-for-operation twin of ``_pykernels``; see that module for the
algorithm description.  Both must stay in lockstep so results are bit-identical.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, M_PI
from libc.stdlib cimport malloc, free, realloc
from libc.string cimport memcpy

cnp.import_array()

cdef double ZERO_TOL = 1e-12

cdef enum:
    STATUS_OK = 0
    STATUS_COLLINEAR = 1
    STATUS_CENTER_DROPPED = 2


cdef struct Work:
    int cap              # max neighborhood size supported
    double *xs
    double *ys
    long long *prio
    int *order
    int *tmp
    int *hull
    int *hull2
    char *vis
    int *tris            # 3 * tri_cap
    int tri_cap
    int *edge            # cap * cap, -1 when absent
    int *stack           # 2 * stack_cap
    int stack_cap
    double *areas


cdef int work_init(Work *w, int cap) except -1:
    w.cap = cap
    w.xs = <double *> malloc(cap * sizeof(double))
    w.ys = <double *> malloc(cap * sizeof(double))
    w.prio = <long long *> malloc(cap * sizeof(long long))
    w.order = <int *> malloc(cap * sizeof(int))
    w.tmp = <int *> malloc(cap * sizeof(int))
    w.hull = <int *> malloc((cap + 2) * sizeof(int))
    w.hull2 = <int *> malloc((cap + 2) * sizeof(int))
    w.vis = <char *> malloc((cap + 2) * sizeof(char))
    w.tri_cap = 2 * cap + 8
    w.tris = <int *> malloc(3 * w.tri_cap * sizeof(int))
    w.edge = <int *> malloc(<size_t> cap * cap * sizeof(int))
    w.stack_cap = 6 * cap + 16
    w.stack = <int *> malloc(2 * w.stack_cap * sizeof(int))
    w.areas = <double *> malloc(cap * sizeof(double))
    if (w.xs == NULL or w.ys == NULL or w.prio == NULL or w.order == NULL or w.tmp == NULL
            or w.hull == NULL or w.hull2 == NULL or w.vis == NULL or w.tris == NULL
            or w.edge == NULL or w.stack == NULL or w.areas == NULL):
        work_free(w)
        raise MemoryError()
    cdef size_t i
    for i in range(<size_t> cap * cap):
        w.edge[i] = -1
    return 0


cdef void work_free(Work *w):
    free(w.xs); free(w.ys); free(w.prio); free(w.order); free(w.tmp)
    free(w.hull); free(w.hull2); free(w.vis); free(w.tris); free(w.edge)
    free(w.stack); free(w.areas)
    w.xs = NULL; w.ys = NULL; w.prio = NULL; w.order = NULL; w.tmp = NULL
    w.hull = NULL; w.hull2 = NULL; w.vis = NULL; w.tris = NULL; w.edge = NULL
    w.stack = NULL; w.areas = NULL


cdef inline double orient_det(const double *xs, const double *ys, int a, int b, int c, double *mag) nogil:
    cdef double left = (xs[b] - xs[a]) * (ys[c] - ys[a])
    cdef double right = (ys[b] - ys[a]) * (xs[c] - xs[a])
    mag[0] = fabs(left) + fabs(right)
    return left - right


cdef inline int orient_sign(const double *xs, const double *ys, int a, int b, int c) nogil:
    cdef double mag
    cdef double det = orient_det(xs, ys, a, b, c, &mag)
    if fabs(det) <= ZERO_TOL * mag:
        return 0
    return 1 if det > 0.0 else -1


cdef int incircle(const double *xs, const double *ys, const long long *prio,
                  int a, int b, int c, int d) nogil:
    cdef double adx = xs[a] - xs[d]
    cdef double ady = ys[a] - ys[d]
    cdef double bdx = xs[b] - xs[d]
    cdef double bdy = ys[b] - ys[d]
    cdef double cdx = xs[c] - xs[d]
    cdef double cdy = ys[c] - ys[d]
    cdef double alift = adx * adx + ady * ady
    cdef double blift = bdx * bdx + bdy * bdy
    cdef double clift = cdx * cdx + cdy * cdy
    cdef double t1 = alift * (bdx * cdy - cdx * bdy)
    cdef double t2 = blift * (cdx * ady - adx * cdy)
    cdef double t3 = clift * (adx * bdy - bdx * ady)
    cdef double det = t1 + t2 + t3
    cdef double mag = fabs(t1) + fabs(t2) + fabs(t3)
    if det != 0.0 and fabs(det) > ZERO_TOL * mag:
        return 1 if det > 0.0 else -1
    # symbolic perturbation, highest priority (smallest prio) first
    cdef long long pv[4]
    cdef int slot[4]
    cdef int i, j, s, ts
    cdef long long tp
    pv[0] = prio[a]; pv[1] = prio[b]; pv[2] = prio[c]; pv[3] = prio[d]
    slot[0] = 0; slot[1] = 1; slot[2] = 2; slot[3] = 3
    for i in range(1, 4):
        j = i
        while j > 0 and (pv[j - 1] > pv[j] or (pv[j - 1] == pv[j] and slot[j - 1] > slot[j])):
            tp = pv[j]; pv[j] = pv[j - 1]; pv[j - 1] = tp
            ts = slot[j]; slot[j] = slot[j - 1]; slot[j - 1] = ts
            j -= 1
    for i in range(4):
        if slot[i] == 0:
            s = orient_sign(xs, ys, b, c, d)
        elif slot[i] == 1:
            s = orient_sign(xs, ys, c, a, d)
        elif slot[i] == 2:
            s = orient_sign(xs, ys, a, b, d)
        else:
            s = -orient_sign(xs, ys, a, b, c)
        if s != 0:
            return s
    return 0


cdef inline bint lex_less(const double *xs, const double *ys, const long long *prio, int i, int j) nogil:
    if xs[i] != xs[j]:
        return xs[i] < xs[j]
    if ys[i] != ys[j]:
        return ys[i] < ys[j]
    return prio[i] < prio[j]


cdef void merge_sort(int *arr, int *tmp, int n, const double *xs, const double *ys,
                     const long long *prio) nogil:
    cdef int width = 1
    cdef int lo, mid, hi, i, j, k
    cdef int *src = arr
    cdef int *dst = tmp
    cdef int *sw
    while width < n:
        lo = 0
        while lo < n:
            mid = lo + width
            if mid > n:
                mid = n
            hi = lo + 2 * width
            if hi > n:
                hi = n
            i = lo; j = mid; k = lo
            while i < mid and j < hi:
                if lex_less(xs, ys, prio, src[j], src[i]):
                    dst[k] = src[j]; j += 1
                else:
                    dst[k] = src[i]; i += 1
                k += 1
            while i < mid:
                dst[k] = src[i]; i += 1; k += 1
            while j < hi:
                dst[k] = src[j]; j += 1; k += 1
            lo += 2 * width
        sw = src; src = dst; dst = sw
        width *= 2
    if src != arr:
        memcpy(arr, src, n * sizeof(int))


cdef inline int apex(const int *t, int p, int q) nogil:
    if t[0] == p and t[1] == q:
        return t[2]
    if t[1] == p and t[2] == q:
        return t[0]
    return t[1]


cdef int push_edge(Work *w, int *top, int p, int q) except -1:
    cdef int *ns
    if top[0] >= w.stack_cap:
        ns = <int *> realloc(w.stack, 4 * w.stack_cap * sizeof(int))
        if ns == NULL:
            raise MemoryError()
        w.stack = ns
        w.stack_cap *= 2
    w.stack[2 * top[0]] = p
    w.stack[2 * top[0] + 1] = q
    top[0] += 1
    return 0


cdef int triangulate_work(Work *w, int m, double min_area, int *ntri_out, int *status) except -1:
    """Triangulate w.xs/w.ys[:m]; triangles left in w.tris[:3*ntri]."""
    cdef double *xs = w.xs
    cdef double *ys = w.ys
    cdef long long *prio = w.prio
    cdef int *order = w.order
    cdef int *tris = w.tris
    cdef int *edge = w.edge
    cdef int cap = w.cap
    cdef int i, j, k, e, p0, p1, q, apx, nline, h, start, nvis, ntri, nh
    cdef int t1, t2, p, a, d, top, flips, max_flips
    cdef double det, mag
    ntri_out[0] = 0
    status[0] = STATUS_OK
    if m < 3:
        status[0] = STATUS_COLLINEAR
        return 0
    for i in range(m):
        order[i] = i
    merge_sort(order, w.tmp, m, xs, ys, prio)

    p0 = order[0]
    k = 1
    while k < m and xs[order[k]] == xs[p0] and ys[order[k]] == ys[p0]:
        k += 1
    if k >= m:
        status[0] = STATUS_COLLINEAR
        return 0
    p1 = order[k]
    # the collinear prefix is collected in w.tmp
    cdef int *line = w.tmp
    line[0] = p0
    line[1] = p1
    nline = 2
    k += 1
    while k < m and orient_sign(xs, ys, p0, p1, order[k]) == 0:
        q = order[k]
        if not (xs[q] == xs[line[nline - 1]] and ys[q] == ys[line[nline - 1]]):
            line[nline] = q
            nline += 1
        k += 1
    if k >= m:
        status[0] = STATUS_COLLINEAR
        return 0

    ntri = 0
    apx = order[k]
    cdef int *hull = w.hull
    if orient_sign(xs, ys, p0, p1, apx) > 0:
        for i in range(nline - 1):
            tris[3 * ntri] = line[i]; tris[3 * ntri + 1] = line[i + 1]; tris[3 * ntri + 2] = apx
            ntri += 1
        for i in range(nline):
            hull[i] = line[i]
    else:
        for i in range(nline - 1):
            tris[3 * ntri] = line[i + 1]; tris[3 * ntri + 1] = line[i]; tris[3 * ntri + 2] = apx
            ntri += 1
        for i in range(nline):
            hull[i] = line[nline - 1 - i]
    hull[nline] = apx
    h = nline + 1

    cdef int *hull2 = w.hull2
    cdef int *sw
    for j in range(k + 1, m):
        q = order[j]
        for i in range(h):
            w.vis[i] = orient_sign(xs, ys, hull[i], hull[(i + 1) % h], q) < 0
        start = -1
        for i in range(h):
            if w.vis[i] and not w.vis[(i - 1 + h) % h]:
                start = i
                break
        if start < 0:
            continue
        nvis = 0
        while nvis < h and w.vis[(start + nvis) % h]:
            nvis += 1
        for i in range(nvis):
            tris[3 * ntri] = hull[(start + i + 1) % h]
            tris[3 * ntri + 1] = hull[(start + i) % h]
            tris[3 * ntri + 2] = q
            ntri += 1
        hull2[0] = hull[start]
        hull2[1] = q
        nh = 2
        for i in range(nvis, h):
            hull2[nh] = hull[(start + i) % h]
            nh += 1
        sw = hull; hull = hull2; hull2 = sw
        h = nh

    # Lawson flips
    for i in range(ntri):
        for e in range(3):
            edge[tris[3 * i + e] * cap + tris[3 * i + (e + 1) % 3]] = i
    top = 0
    for i in range(ntri):
        for e in range(3):
            push_edge(w, &top, tris[3 * i + e], tris[3 * i + (e + 1) % 3])
    max_flips = 10 * m * m + 100
    flips = 0
    while top > 0 and flips < max_flips:
        top -= 1
        p = w.stack[2 * top]
        q = w.stack[2 * top + 1]
        t1 = edge[p * cap + q]
        t2 = edge[q * cap + p]
        if t1 < 0 or t2 < 0:
            continue
        a = apex(&tris[3 * t1], p, q)
        d = apex(&tris[3 * t2], q, p)
        if incircle(xs, ys, prio, p, q, a, d) <= 0:
            continue
        if orient_sign(xs, ys, a, p, d) <= 0 or orient_sign(xs, ys, a, d, q) <= 0:
            continue
        edge[p * cap + q] = -1
        edge[q * cap + p] = -1
        tris[3 * t1] = a; tris[3 * t1 + 1] = p; tris[3 * t1 + 2] = d
        tris[3 * t2] = a; tris[3 * t2 + 1] = d; tris[3 * t2 + 2] = q
        edge[a * cap + p] = t1
        edge[p * cap + d] = t1
        edge[d * cap + a] = t1
        edge[a * cap + d] = t2
        edge[d * cap + q] = t2
        edge[q * cap + a] = t2
        push_edge(w, &top, p, d)
        push_edge(w, &top, d, q)
        push_edge(w, &top, q, a)
        push_edge(w, &top, a, p)
        flips += 1

    # reset the edge table and compact the surviving triangles
    cdef int nout = 0
    for i in range(ntri):
        for e in range(3):
            edge[tris[3 * i + e] * cap + tris[3 * i + (e + 1) % 3]] = -1
    for i in range(ntri):
        det = orient_det(xs, ys, tris[3 * i], tris[3 * i + 1], tris[3 * i + 2], &mag)
        if 0.5 * det > min_area:
            tris[3 * nout] = tris[3 * i]
            tris[3 * nout + 1] = tris[3 * i + 1]
            tris[3 * nout + 2] = tris[3 * i + 2]
            nout += 1
    ntri_out[0] = nout
    return 0


def triangulate(const double[:, ::1] xy, const long long[::1] prio, double min_area):
    """Delaunay triangulation of 2D points; see ``_pykernels.triangulate``."""
    cdef int m = xy.shape[0]
    cdef Work w
    cdef int i, ntri, status
    work_init(&w, max(m, 1))
    try:
        for i in range(m):
            w.xs[i] = xy[i, 0]
            w.ys[i] = xy[i, 1]
            w.prio[i] = prio[i]
        triangulate_work(&w, m, min_area, &ntri, &status)
        out = np.empty((ntri, 3), dtype=np.int64)
        for i in range(ntri):
            out[i, 0] = w.tris[3 * i]
            out[i, 1] = w.tris[3 * i + 1]
            out[i, 2] = w.tris[3 * i + 2]
    finally:
        work_free(&w)
    return out, status


def vertex_areas(const double[:, ::1] xy, const long long[:, ::1] triangles, int m):
    """Per-vertex sum of incident triangle areas, plus the triangle areas."""
    cdef Py_ssize_t t, ntri = triangles.shape[0]
    cdef double mag, det, a
    areas = np.zeros(m)
    tri_areas = np.empty(ntri)
    cdef double[::1] av = areas
    cdef double[::1] tv = tri_areas
    cdef double *xs = <double *> malloc(max(m, 1) * sizeof(double))
    cdef double *ys = <double *> malloc(max(m, 1) * sizeof(double))
    cdef int i
    for i in range(m):
        xs[i] = xy[i, 0]
        ys[i] = xy[i, 1]
    for t in range(ntri):
        det = orient_det(xs, ys, <int> triangles[t, 0], <int> triangles[t, 1], <int> triangles[t, 2], &mag)
        a = 0.5 * det
        tv[t] = a
        av[triangles[t, 0]] += a
        av[triangles[t, 1]] += a
        av[triangles[t, 2]] += a
    free(xs)
    free(ys)
    return areas, tri_areas


def assemble_rows(const double[:, ::1] points, const long long[::1] indptr, const long long[::1] indices,
                  const double[:, ::1] origins, const double[:, :, ::1] bases, double eps, double min_area):
    """Unsymmetrized SPCL rows; see ``_pykernels.assemble_rows``."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t i, lo, hi, g, a, nnz_cap, nnz = 0
    cdef int m, cap = 1, ci, ntri, st, t
    cdef double ox, oy, oz, dx, dy, dz, det, mag, area, ai, cx, cy, wv
    cdef double scale = 1.0 / (4.0 * M_PI * eps * eps * eps * eps)
    cdef double inv4e2 = 1.0 / (4.0 * eps * eps)
    cdef double e1x, e1y, e1z, e2x, e2y, e2z
    for i in range(n):
        if indptr[i + 1] - indptr[i] > cap:
            cap = <int> (indptr[i + 1] - indptr[i])
    nnz_cap = indptr[n]
    rows = np.empty(nnz_cap, dtype=np.int64)
    cols = np.empty(nnz_cap, dtype=np.int64)
    vals = np.empty(nnz_cap, dtype=np.float64)
    center_area = np.zeros(n)
    status = np.zeros(n, dtype=np.int8)
    cdef long long[::1] rv = rows
    cdef long long[::1] cv = cols
    cdef double[::1] vv = vals
    cdef double[::1] cav = center_area
    cdef cnp.int8_t[::1] sv = status
    cdef Work w
    work_init(&w, cap)
    try:
        for i in range(n):
            lo = indptr[i]
            hi = indptr[i + 1]
            m = <int> (hi - lo)
            ox = origins[i, 0]; oy = origins[i, 1]; oz = origins[i, 2]
            e1x = bases[i, 0, 0]; e1y = bases[i, 0, 1]; e1z = bases[i, 0, 2]
            e2x = bases[i, 1, 0]; e2y = bases[i, 1, 1]; e2z = bases[i, 1, 2]
            ci = -1
            for a in range(m):
                g = indices[lo + a]
                if g == i:
                    ci = <int> a
                dx = points[g, 0] - ox
                dy = points[g, 1] - oy
                dz = points[g, 2] - oz
                w.xs[a] = dx * e1x + dy * e1y + dz * e1z
                w.ys[a] = dx * e2x + dy * e2y + dz * e2z
                w.prio[a] = g
            triangulate_work(&w, m, min_area, &ntri, &st)
            if st != STATUS_OK:
                sv[i] = st
                continue
            for a in range(m):
                w.areas[a] = 0.0
            for t in range(ntri):
                det = orient_det(w.xs, w.ys, w.tris[3 * t], w.tris[3 * t + 1], w.tris[3 * t + 2], &mag)
                area = 0.5 * det
                w.areas[w.tris[3 * t]] += area
                w.areas[w.tris[3 * t + 1]] += area
                w.areas[w.tris[3 * t + 2]] += area
            ai = w.areas[ci]
            if ai <= 0.0:
                sv[i] = STATUS_CENTER_DROPPED
                continue
            cav[i] = ai
            cx = w.xs[ci]
            cy = w.ys[ci]
            for a in range(m):
                if a == ci or w.areas[a] <= 0.0:
                    continue
                dx = w.xs[a] - cx
                dy = w.ys[a] - cy
                wv = -scale * (ai * w.areas[a] / 9.0) * exp(-(dx * dx + dy * dy) * inv4e2)
                rv[nnz] = i
                cv[nnz] = indices[lo + a]
                vv[nnz] = wv
                nnz += 1
    finally:
        work_free(&w)
    return rows[:nnz].copy(), cols[:nnz].copy(), vals[:nnz].copy(), center_area, status
