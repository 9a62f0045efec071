"""Pure-Python implementation of the per-point assembly kernels.

This module mirrors ``_ckernels.pyx`` operation for operation so that both
backends produce bit-identical results.  It is used when the compiled
extension is missing or when ``LAPSHAPE_PURE=1`` is set.

Triangulation is a lexicographic sweep followed by Lawson edge flips.  The
in-circle test falls back to symbolic perturbation of the lifted heights when
the floating-point determinant is too small to trust; a lower priority number
means a larger perturbation, which makes every decision deterministic.
"""

from __future__ import annotations

import math

import numpy as np

ZERO_TOL = 1e-12

STATUS_OK = 0
STATUS_COLLINEAR = 1
STATUS_CENTER_DROPPED = 2


def _orient(xs, ys, a, b, c):
    left = (xs[b] - xs[a]) * (ys[c] - ys[a])
    right = (ys[b] - ys[a]) * (xs[c] - xs[a])
    return left - right, abs(left) + abs(right)


def _orient_sign(xs, ys, a, b, c):
    det, mag = _orient(xs, ys, a, b, c)
    if abs(det) <= ZERO_TOL * mag:
        return 0
    return 1 if det > 0.0 else -1


def _incircle(xs, ys, prio, a, b, c, d):
    """Sign of the in-circle determinant; positive when d is inside circle(a, b, c).

    (a, b, c) must be counter-clockwise.  Never returns 0 for distinct points
    that are not all collinear.
    """
    adx = xs[a] - xs[d]
    ady = ys[a] - ys[d]
    bdx = xs[b] - xs[d]
    bdy = ys[b] - ys[d]
    cdx = xs[c] - xs[d]
    cdy = ys[c] - ys[d]
    alift = adx * adx + ady * ady
    blift = bdx * bdx + bdy * bdy
    clift = cdx * cdx + cdy * cdy
    t1 = alift * (bdx * cdy - cdx * bdy)
    t2 = blift * (cdx * ady - adx * cdy)
    t3 = clift * (adx * bdy - bdx * ady)
    det = t1 + t2 + t3
    mag = abs(t1) + abs(t2) + abs(t3)
    if det != 0.0 and abs(det) > ZERO_TOL * mag:
        return 1 if det > 0.0 else -1
    # Symbolic perturbation: each lifted height is raised by an infinitesimal
    # whose size decreases with priority; the first nonzero coefficient wins.
    verts = sorted([(prio[a], 0, a), (prio[b], 1, b), (prio[c], 2, c), (prio[d], 3, d)])
    for _, slot, _v in verts:
        if slot == 0:
            s = _orient_sign(xs, ys, b, c, d)
        elif slot == 1:
            s = _orient_sign(xs, ys, c, a, d)
        elif slot == 2:
            s = _orient_sign(xs, ys, a, b, d)
        else:
            s = -_orient_sign(xs, ys, a, b, c)
        if s != 0:
            return s
    return 0


def triangulate(xy, prio, min_area):
    """Delaunay triangulation of 2D points.

    Parameters
    ----------
    xy : (m, 2) array of float
    prio : (m,) array of int
        Tie-break priority; smaller values are perturbed more.
    min_area : float
        Triangles with area at or below this are dropped.

    Returns
    -------
    triangles : (T, 3) int64 array of counter-clockwise local index triples
    status : int
        ``STATUS_OK`` or ``STATUS_COLLINEAR``.
    """
    xs = [float(v) for v in xy[:, 0]]
    ys = [float(v) for v in xy[:, 1]]
    pr = [int(v) for v in prio]
    tris, status = _triangulate_lists(xs, ys, pr, float(min_area))
    return np.array(tris, dtype=np.int64).reshape(-1, 3), status


def _triangulate_lists(xs, ys, prio, min_area):
    m = len(xs)
    if m < 3:
        return [], STATUS_COLLINEAR
    order = sorted(range(m), key=lambda i: (xs[i], ys[i], prio[i]))

    # Find the first point off the line through the two lowest points.
    p0 = order[0]
    k = 1
    while k < m and xs[order[k]] == xs[p0] and ys[order[k]] == ys[p0]:
        k += 1
    if k >= m:
        return [], STATUS_COLLINEAR
    p1 = order[k]
    line = [p0, p1]
    k += 1
    while k < m and _orient_sign(xs, ys, p0, p1, order[k]) == 0:
        q = order[k]
        if not (xs[q] == xs[line[-1]] and ys[q] == ys[line[-1]]):
            line.append(q)
        k += 1
    if k >= m:
        return [], STATUS_COLLINEAR

    tris = []
    apex = order[k]
    if _orient_sign(xs, ys, p0, p1, apex) > 0:
        for i in range(len(line) - 1):
            tris.append([line[i], line[i + 1], apex])
        hull = line + [apex]
    else:
        for i in range(len(line) - 1):
            tris.append([line[i + 1], line[i], apex])
        hull = line[::-1] + [apex]

    for j in range(k + 1, m):
        q = order[j]
        h = len(hull)
        vis = [_orient_sign(xs, ys, hull[i], hull[(i + 1) % h], q) < 0 for i in range(h)]
        start = -1
        for i in range(h):
            if vis[i] and not vis[i - 1]:
                start = i
                break
        if start < 0:
            continue  # duplicate of an existing vertex
        hull = hull[start:] + hull[:start]
        nvis = 0
        while nvis < h and vis[(start + nvis) % h]:
            nvis += 1
        for i in range(nvis):
            tris.append([hull[i + 1], hull[i], q])
        hull = [hull[0], q] + hull[nvis:]

    _lawson(xs, ys, prio, tris, m)

    out = []
    for t in tris:
        det, _ = _orient(xs, ys, t[0], t[1], t[2])
        if 0.5 * det > min_area:
            out.append(t)
    return out, STATUS_OK


def _lawson(xs, ys, prio, tris, m):
    edge = {}
    for ti, t in enumerate(tris):
        for e in range(3):
            edge[(t[e], t[(e + 1) % 3])] = ti
    stack = []
    for ti, t in enumerate(tris):
        for e in range(3):
            stack.append((t[e], t[(e + 1) % 3]))
    max_flips = 10 * m * m + 100
    flips = 0
    while stack and flips < max_flips:
        p, q = stack.pop()
        t1 = edge.get((p, q), -1)
        t2 = edge.get((q, p), -1)
        if t1 < 0 or t2 < 0:
            continue
        a = _apex(tris[t1], p, q)
        d = _apex(tris[t2], q, p)
        if _incircle(xs, ys, prio, p, q, a, d) <= 0:
            continue
        if _orient_sign(xs, ys, a, p, d) <= 0 or _orient_sign(xs, ys, a, d, q) <= 0:
            continue
        del edge[(p, q)]
        del edge[(q, p)]
        tris[t1] = [a, p, d]
        tris[t2] = [a, d, q]
        edge[(a, p)] = t1
        edge[(p, d)] = t1
        edge[(d, a)] = t1
        edge[(a, d)] = t2
        edge[(d, q)] = t2
        edge[(q, a)] = t2
        stack.append((p, d))
        stack.append((d, q))
        stack.append((q, a))
        stack.append((a, p))
        flips += 1


def _apex(t, p, q):
    # t contains the directed edge p -> q; return the third vertex
    for e in range(3):
        if t[e] == p and t[(e + 1) % 3] == q:
            return t[(e + 2) % 3]
    raise AssertionError("edge not in triangle")


def vertex_areas(xy, triangles, m):
    """Per-vertex sum of incident triangle areas, plus the triangle areas."""
    xs = [float(v) for v in xy[:, 0]]
    ys = [float(v) for v in xy[:, 1]]
    areas = [0.0] * m
    tri_areas = []
    for t in triangles:
        det, _ = _orient(xs, ys, int(t[0]), int(t[1]), int(t[2]))
        a = 0.5 * det
        tri_areas.append(a)
        for v in t:
            areas[int(v)] += a
    return np.array(areas), np.array(tri_areas)


def assemble_rows(points, indptr, indices, origins, bases, eps, min_area):
    """Unsymmetrized SPCL rows.

    For every row ``i`` the neighborhood ``indices[indptr[i]:indptr[i+1]]``
    (which contains ``i``) is projected onto the frame ``(origins[i],
    bases[i][:2])``, triangulated, and turned into off-diagonal weights.

    Returns
    -------
    rows, cols, vals : arrays describing off-diagonal entries
    center_area : (n,) area of each center in its own triangulation
    status : (n,) int8 status per row
    """
    n = len(indptr) - 1
    scale = 1.0 / (4.0 * math.pi * eps * eps * eps * eps)
    inv4e2 = 1.0 / (4.0 * eps * eps)
    out_rows = []
    out_cols = []
    out_vals = []
    center_area = np.zeros(n)
    status = np.zeros(n, dtype=np.int8)
    for i in range(n):
        lo, hi = int(indptr[i]), int(indptr[i + 1])
        nb = indices[lo:hi]
        m = hi - lo
        ox, oy, oz = (float(v) for v in origins[i])
        e1 = [float(v) for v in bases[i, 0]]
        e2 = [float(v) for v in bases[i, 1]]
        xs = []
        ys = []
        prio = []
        ci = -1
        for a in range(m):
            g = int(nb[a])
            if g == i:
                ci = a
            dx = float(points[g, 0]) - ox
            dy = float(points[g, 1]) - oy
            dz = float(points[g, 2]) - oz
            xs.append(dx * e1[0] + dy * e1[1] + dz * e1[2])
            ys.append(dx * e2[0] + dy * e2[1] + dz * e2[2])
            prio.append(g)
        tris, st = _triangulate_lists(xs, ys, prio, min_area)
        if st != STATUS_OK:
            status[i] = st
            continue
        areas = [0.0] * m
        for t in tris:
            det, _ = _orient(xs, ys, t[0], t[1], t[2])
            a = 0.5 * det
            areas[t[0]] += a
            areas[t[1]] += a
            areas[t[2]] += a
        ai = areas[ci]
        if ai <= 0.0:
            status[i] = STATUS_CENTER_DROPPED
            continue
        center_area[i] = ai
        cx = xs[ci]
        cy = ys[ci]
        for a in range(m):
            if a == ci or areas[a] <= 0.0:
                continue
            dx = xs[a] - cx
            dy = ys[a] - cy
            w = -scale * (ai * areas[a] / 9.0) * math.exp(-(dx * dx + dy * dy) * inv4e2)
            out_rows.append(i)
            out_cols.append(int(nb[a]))
            out_vals.append(w)
    return (
        np.array(out_rows, dtype=np.int64),
        np.array(out_cols, dtype=np.int64),
        np.array(out_vals, dtype=np.float64),
        center_area,
        status,
    )
