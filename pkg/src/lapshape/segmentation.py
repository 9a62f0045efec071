"""Segmenters over signature fields: persistence clustering, heat walk and
curvature-seeded region growing, plus type re-clustering of segments."""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree
from scipy.sparse.csgraph import connected_components

from .clustering1d import kmeans_1d, merge_gaps, single_linkage_groups, single_linkage_threshold
from .errors import AmbiguityError, InvalidInputError
from .geometry import CloudLike, as_points, ball_neighborhoods, max_normal_angle
from .laplacian import SpclOperator
from .signatures import HeatKernelMatrix

DISSIPATOR = -1
CULLED = -1


@dataclass(frozen=True)
class Segmentation:
    """Per-point segment labels with the maximum of each segment.

    ``labels`` are dense ids ``0 .. S-1`` (``CULLED`` marks points removed by
    :func:`remove_small_segments`).  Segment ids are ordered by descending
    maximum value, ties by lower point id.
    """

    labels: np.ndarray
    segment_max: np.ndarray
    segment_max_value: np.ndarray
    reference_scale: float | None = None
    params: dict = field(default_factory=dict)
    component_count: int = 1

    @property
    def segment_count(self) -> int:
        return len(self.segment_max)

    @property
    def n(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class PersistencePair:
    """Birth and death values of one peak in the descending sweep.

    Essential pairs (one per connected component) never die: ``death`` is
    ``-inf`` and ``lifespan`` is ``inf``.
    """

    birth: float
    death: float
    lifespan: float
    birth_point: int
    death_point: int = -1

    @property
    def essential(self) -> bool:
        return self.death_point < 0


@dataclass(frozen=True)
class HeatWalkResult:
    """Exemplars, per-point assignment (``DISSIPATOR`` for dissipative points) and iteration record.

    ``votes`` and ``candidates`` are the raw fixed-point state of the voting
    iteration: a candidate may vote for another candidate, so accumulator
    regions follow those links to self-voting ``exemplars``.
    """

    exemplars: np.ndarray
    assignment: np.ndarray
    iterations: int
    converged: bool
    potential: np.ndarray
    negative_clamped: bool = False
    accumulator_assignment: np.ndarray | None = field(default=None, repr=False)
    votes: np.ndarray | None = field(default=None, repr=False)
    candidates: np.ndarray | None = field(default=None, repr=False)

    @property
    def dissipator(self) -> np.ndarray:
        return np.flatnonzero(self.assignment == DISSIPATOR)


@dataclass(frozen=True)
class TypeGrouping:
    """Type id per segment from 1D single linkage of a per-segment criterion."""

    segment_type: np.ndarray
    type_count: int
    merge_thresholds: np.ndarray


@dataclass(frozen=True)
class BalanceResult:
    ks: np.ndarray
    scores: np.ndarray
    intra: np.ndarray
    inter: np.ndarray
    argmin: int


# ----------------------------------------------------------------------------
# neighbor graph


def nu_graph(op: SpclOperator, nu: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Top-``nu`` weight-magnitude neighbors of each operator row, symmetrized by union.

    Returns CSR ``(indptr, indices)`` without self loops, indices sorted.
    """
    if nu < 1:
        raise InvalidInputError("nu must be at least 1")
    a = op.stiffness.tocoo()
    keep = (a.row != a.col) & (a.data != 0.0)
    rows, cols, mags = a.row[keep], a.col[keep], np.abs(a.data[keep])
    order = np.lexsort((cols, -mags, rows))
    rows, cols = rows[order], cols[order]
    first = np.searchsorted(rows, rows, side="left")
    sel = (np.arange(len(rows)) - first) < nu
    n = op.n
    g = sp.csr_matrix((np.ones(int(sel.sum())), (rows[sel], cols[sel])), shape=(n, n))
    g = ((g + g.T) > 0).tocsr()
    g.sort_indices()
    return g.indptr.astype(np.int64), g.indices.astype(np.int64)


def graph_components(indptr: np.ndarray, indices: np.ndarray) -> tuple[int, np.ndarray]:
    n = len(indptr) - 1
    g = sp.csr_matrix((np.ones(len(indices)), indices, indptr), shape=(n, n))
    return sp.csgraph.connected_components(g, directed=False)


# ----------------------------------------------------------------------------
# persistence clustering


def _descending_order(values: np.ndarray) -> np.ndarray:
    return np.lexsort((np.arange(len(values)), -values))


def _sweep(values: np.ndarray, indptr: np.ndarray, indices: np.ndarray, tau: float):
    """Union-find sweep over points in descending value order.

    A point with no processed neighbor starts a cluster.  Otherwise it joins
    the cluster of its highest processed neighbor.  The other adjacent
    clusters are then visited in descending peak order; of each such cluster
    and the point's current cluster, the one with the lower peak is absorbed
    into the other when its peak exceeds the point's value by at most ``tau``.
    Returns ``(root_of_point, pairs)``; the pairs are complete for ``tau = inf``.
    """
    n = len(values)
    order = _descending_order(values)
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(n)
    rank_l = rank.tolist()
    vals = values.tolist()
    ip = indptr.tolist()
    nb = indices.tolist()
    parent = list(range(n))
    cluster = [-1] * n
    pairs: list[PersistencePair] = []

    def find(x: int) -> int:
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    for p in order.tolist():
        rp = rank_l[p]
        best = -1
        best_rank = n
        roots = set()
        for q in nb[ip[p]:ip[p + 1]]:
            rq = rank_l[q]
            if rq < rp:
                if rq < best_rank:
                    best, best_rank = q, rq
                roots.add(find(cluster[q]))
        if best < 0:
            cluster[p] = p
            continue
        cluster[p] = cluster[best]
        if len(roots) < 2:
            continue
        cur = find(cluster[p])
        vp = vals[p]
        for r in sorted(roots, key=rank_l.__getitem__):
            r = find(r)
            if r == cur:
                continue
            hi, lo = (r, cur) if rank_l[r] < rank_l[cur] else (cur, r)
            gap = vals[lo] - vp
            if gap <= tau:
                parent[lo] = hi
                pairs.append(PersistencePair(vals[lo], vp, gap, lo, p))
                cur = hi
    root_of = np.array([find(cluster[p]) for p in range(n)], dtype=np.int64)
    return root_of, pairs


def persistence_pairs(values: np.ndarray, indptr: np.ndarray, indices: np.ndarray) -> list[PersistencePair]:
    """All persistence pairs of the descending sweep, sorted by lifespan (descending), then birth point."""
    root_of, pairs = _sweep(values, indptr, indices, math.inf)
    for r in np.unique(root_of).tolist():
        pairs.append(PersistencePair(float(values[r]), -math.inf, math.inf, int(r), -1))
    pairs.sort(key=lambda q: (-q.lifespan, q.birth_point))
    return pairs


def _labels_from_roots(root_of: np.ndarray, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    roots = np.unique(root_of)
    order = np.lexsort((roots, -values[roots]))
    roots = roots[order]
    lookup = np.empty(len(values), dtype=np.int64)
    lookup[roots] = np.arange(len(roots))
    return lookup[root_of], roots


def persistence_segment(cloud: CloudLike | None, op: SpclOperator, hks_column: np.ndarray, nu: int = 10,
                        tau: float = 0.0, reference_scale: float | None = None
                        ) -> tuple[Segmentation, list[PersistencePair]]:
    """Persistence clustering of a scalar field over the operator's top-``nu`` graph.

    Parameters
    ----------
    cloud : PointCloud, optional
        Only used to check the point count.
    op : SpclOperator
    hks_column : (n,) array
        Field values, typically one signature scale.
    nu : int
        Neighbors kept per operator row.
    tau : float
        Clusters whose peak is at most ``tau`` above the merge point are absorbed.
    reference_scale : float, optional
        Recorded in the result for feature-vector extraction.

    Returns
    -------
    Segmentation, list of PersistencePair
        The pair list does not depend on ``tau``.
    """
    values = np.asarray(hks_column, dtype=np.float64).ravel()
    if len(values) != op.n:
        raise InvalidInputError(f"field has {len(values)} values for {op.n} points")
    if cloud is not None and len(as_points(cloud)) != op.n:
        raise InvalidInputError("cloud and operator sizes differ")
    if not tau >= 0:
        raise InvalidInputError("tau must be nonnegative")
    indptr, indices = nu_graph(op, nu)
    return segment_field(values, indptr, indices, tau, reference_scale, {"nu": int(nu), "tau": float(tau)})


def segment_field(values: np.ndarray, indptr: np.ndarray, indices: np.ndarray, tau: float,
                  reference_scale: float | None = None, params: dict | None = None
                  ) -> tuple[Segmentation, list[PersistencePair]]:
    """Persistence clustering on an explicit graph (see :func:`persistence_segment`)."""
    values = np.asarray(values, dtype=np.float64)
    pairs = persistence_pairs(values, indptr, indices)
    root_of, _ = _sweep(values, indptr, indices, tau)
    labels, roots = _labels_from_roots(root_of, values)
    essentials = sum(1 for q in pairs if q.essential)
    seg = Segmentation(labels, roots, values[roots], reference_scale,
                       dict(params or {"tau": float(tau)}), essentials)
    return seg, pairs


def tau_for_segment_count(pairs: list[PersistencePair], s: int) -> float:
    """A threshold at which exactly ``s`` segments survive.

    Lifespans are ranked in descending order (essential pairs first); the
    result lies between the ``s``-th and ``(s+1)``-th, at their midpoint when
    both are finite.
    """
    spans = sorted((q.lifespan for q in pairs), reverse=True)
    total = len(spans)
    if not 1 <= s <= total:
        raise InvalidInputError(f"segment count must be in [1, {total}], got {s}")
    upper = spans[s - 1]
    if s == total:
        if math.isinf(upper):
            return 0.0
        if upper <= 0.0:
            raise AmbiguityError(f"{s} segments need a threshold below lifespan {upper!r}")
        return upper / 2.0
    lower = spans[s]
    if upper == lower:
        tied = [q.birth_point for q in pairs if q.lifespan == upper]
        raise AmbiguityError(f"lifespan {upper!r} is shared by peaks {tied} across the cut at {s} segments")
    if math.isinf(upper):
        return 2.0 * lower if lower > 0 else 1.0
    mid = 0.5 * (upper + lower)
    # adjacent doubles: the rounded midpoint can land on the upper value
    return mid if lower <= mid < upper else lower


def remove_small_segments(seg: Segmentation, fraction: float = 0.01) -> tuple[Segmentation, np.ndarray]:
    """Drop segments with fewer than ``fraction * n`` points.

    Culled points get label ``CULLED``; surviving ids are re-densified in their
    original order.  Returns the new segmentation and the culled point ids.
    """
    if not 0 <= fraction < 1:
        raise InvalidInputError("fraction must be in [0, 1)")
    n = seg.n
    sizes = np.bincount(seg.labels[seg.labels >= 0], minlength=seg.segment_count)
    keep = sizes >= fraction * n
    if not keep.any():
        raise InvalidInputError("every segment is below the size threshold")
    remap = np.full(seg.segment_count, CULLED, dtype=np.int64)
    remap[keep] = np.arange(int(keep.sum()))
    labels = np.where(seg.labels >= 0, remap[np.maximum(seg.labels, 0)], CULLED)
    culled = np.flatnonzero(labels == CULLED)
    out = Segmentation(labels, seg.segment_max[keep], seg.segment_max_value[keep], seg.reference_scale,
                       {**seg.params, "cull_fraction": float(fraction)}, seg.component_count)
    return out, culled


# ----------------------------------------------------------------------------
# heat walk


def _walk_step(k: np.ndarray, exemplars: np.ndarray, potential: np.ndarray, chunk: int = 2048):
    n = k.shape[0]
    assign = np.empty(n, dtype=np.int64)
    new_pot = np.empty(n)
    cap = potential[exemplars][None, :]
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        score = np.minimum(k[lo:hi][:, exemplars], cap)
        j = np.argmax(score, axis=1)
        assign[lo:hi] = exemplars[j]
        new_pot[lo:hi] = score[np.arange(hi - lo), j]
    return assign, new_pot


def heat_walk(kernel: HeatKernelMatrix, max_iter: int = 200) -> HeatWalkResult:
    """Exemplar voting on a dense heat kernel, then the dissipator split.

    Starting from every point as a candidate with potential ``k(x, x)``, each
    point picks the candidate ``y`` maximizing ``min(k(x, y), s(y))`` (lowest id
    on ties) and takes that value as its new potential; the chosen points
    become the next candidates.  Iteration stops when candidates, choices and
    potentials all repeat.  A point then becomes dissipative when its
    normalized kernel row is closer (Kullback-Leibler) to the uniform density
    than to the mean density of its region.
    """
    k = kernel.entries
    n = k.shape[0]
    potential = np.diag(k).copy()
    exemplars = np.arange(n, dtype=np.int64)
    assign = np.full(n, -1, dtype=np.int64)
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        new_assign, new_pot = _walk_step(k, exemplars, potential)
        new_ex = np.unique(new_assign)
        if (np.array_equal(new_ex, exemplars) and np.array_equal(new_assign, assign)
                and np.array_equal(new_pot, potential)):
            converged = True
            break
        exemplars, assign, potential = new_ex, new_assign, new_pot
    accum = _follow_votes(assign)
    dens = np.maximum(k, 0.0)
    negative = bool((k < 0).any())
    diss = _dissipative(dens, accum)
    final = np.where(diss, DISSIPATOR, accum)
    return HeatWalkResult(np.unique(accum), final, iterations, converged, potential, negative, accum,
                          assign, exemplars)


def _follow_votes(votes: np.ndarray) -> np.ndarray:
    """Send every point to the self-voting candidate at the end of its vote chain.

    A chain that closes into a cycle ends at the cycle's lowest id.
    """
    root = votes.copy()
    for _ in range(len(votes)):
        nxt = votes[root]
        if np.array_equal(nxt, root):
            return root
        root = nxt
    cyc = np.flatnonzero(votes[root] != root)
    for p in np.unique(root[cyc]).tolist():
        members = [p]
        q = int(votes[p])
        while q != p:
            members.append(q)
            q = int(votes[q])
        lo = min(members)
        root[np.isin(root, members)] = lo
    return root


def walk_step(kernel: HeatKernelMatrix, result: HeatWalkResult) -> tuple[np.ndarray, np.ndarray]:
    """One voting update on a returned state: ``(votes, potential)``."""
    return _walk_step(kernel.entries, result.candidates, result.potential)


def _xlogy_ratio(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0) / np.where(q > 0, q, 1.0)), 0.0)
        t = np.where((p > 0) & (q <= 0), np.inf, t)
    return t.sum(axis=1)


def _dissipative(dens: np.ndarray, accum: np.ndarray, chunk: int = 2048) -> np.ndarray:
    n = dens.shape[0]
    rowsum = dens.sum(axis=1)
    regions, inv = np.unique(accum, return_inverse=True)
    region_rows = np.zeros((len(regions), n))
    np.add.at(region_rows, inv, dens)
    region_pdf = region_rows / region_rows.sum(axis=1, keepdims=True)
    out = np.zeros(n, dtype=bool)
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        p = dens[lo:hi] / rowsum[lo:hi, None]
        to_uniform = _xlogy_ratio(p, np.full_like(p, 1.0 / n))
        to_region = _xlogy_ratio(p, region_pdf[inv[lo:hi]])
        out[lo:hi] = to_uniform < to_region
    return out


def heat_walk_segmentation(result: HeatWalkResult, hks_diagonal: np.ndarray) -> tuple[Segmentation, np.ndarray]:
    """Convert a heat walk into a :class:`Segmentation` plus per-segment criteria.

    Accumulator regions are ordered by descending exemplar signature value; the
    dissipator (if any) is the last segment.  The criterion of a region is the
    signature at its exemplar; the dissipator's is the mean signature of all
    non-dissipative points.
    """
    hks = np.asarray(hks_diagonal, dtype=np.float64)
    ex = np.unique(result.assignment[result.assignment != DISSIPATOR])
    order = np.lexsort((ex, -hks[ex]))
    ex = ex[order]
    lookup = {int(e): i for i, e in enumerate(ex)}
    labels = np.array([lookup.get(int(a), len(ex)) for a in result.assignment], dtype=np.int64)
    seg_max = list(ex)
    seg_val = list(hks[ex])
    criteria = list(hks[ex])
    if (result.assignment == DISSIPATOR).any():
        members = np.flatnonzero(labels == len(ex))
        top = members[np.argmax(hks[members])]
        seg_max.append(int(top))
        seg_val.append(float(hks[top]))
        criteria.append(float(hks[result.assignment != DISSIPATOR].mean()))
    seg = Segmentation(labels, np.array(seg_max, dtype=np.int64), np.array(seg_val), None,
                       {"method": "heatwalk", "dissipator": bool((result.assignment == DISSIPATOR).any())})
    return seg, np.array(criteria)


# ----------------------------------------------------------------------------
# curvature-seeded region growing


def curvature_segment(cloud: CloudLike, normals: np.ndarray, edges, r: float, kappa: np.ndarray | None = None,
                      k_seeds: int = 3, target_count: int | None = None, max_edge_value: float | None = None,
                      values: np.ndarray | None = None) -> Segmentation:
    """Region growing seeded by curvature classes, stopped by count or edge weight.

    Parameters
    ----------
    cloud : PointCloud or array
    normals : (n, 3) array
        Normals estimated at radius ``r``.
    edges : iterable of int
        Sharp-edge point ids; regions never grow through them.
    r : float
        Neighborhood radius used for normals and adjacency.
    kappa : (n,) array, optional
        Curvature proxy; defaults to the max neighborhood normal angle.
    k_seeds : int
        Number of 1D k-means classes of ``kappa``.
    target_count, max_edge_value :
        Stop merging at this region count, or before the first merge whose
        weight exceeds this value.  At least one is required.
    values : (n,) array, optional
        Criterion for the per-segment maximum (defaults to ``kappa``).
    """
    pts = as_points(cloud)
    n = len(pts)
    if target_count is None and max_edge_value is None:
        raise InvalidInputError("give target_count or max_edge_value")
    if target_count is not None and target_count < 1:
        raise InvalidInputError("target_count must be at least 1")
    kappa = max_normal_angle(cloud, normals, r) if kappa is None else np.asarray(kappa, dtype=np.float64)
    is_edge = np.zeros(n, dtype=bool)
    is_edge[np.asarray(list(edges), dtype=np.int64)] = True
    if is_edge.all():
        raise InvalidInputError("every point is an edge point")
    indptr, indices = ball_neighborhoods(cloud, r, include_self=False)
    ip = indptr.tolist()
    nb = indices.tolist()

    free = np.flatnonzero(~is_edge)
    init = np.quantile(kappa[free], np.linspace(0.0, 1.0, k_seeds)) if k_seeds > 1 else [kappa[free].mean()]
    cls_free, _ = kmeans_1d(kappa[free], init)
    cls = np.full(n, -1, dtype=np.int64)
    cls[free] = cls_free

    region = np.full(n, -1, dtype=np.int64)
    nreg = 0
    cls_l = cls.tolist()
    edge_l = is_edge.tolist()
    for seed in free.tolist():
        if region[seed] >= 0:
            continue
        region[seed] = nreg
        queue = deque([seed])
        while queue:
            p = queue.popleft()
            for q in nb[ip[p]:ip[p + 1]]:
                if region[q] < 0 and not edge_l[q] and cls_l[q] == cls_l[seed]:
                    region[q] = nreg
                    queue.append(q)
        nreg += 1

    regions = _merge_regions(region, nreg, kappa, is_edge, ip, nb, target_count, max_edge_value)
    labels = _assign_edges(pts, regions, indptr, indices, r)
    crit = kappa if values is None else np.asarray(values, dtype=np.float64)
    return _segmentation_from_labels(labels, crit, {"method": "curvature", "k_seeds": int(k_seeds),
                                                    "target_count": target_count, "max_edge_value": max_edge_value})


def _merge_regions(region, nreg, kappa, is_edge, ip, nb, target_count, max_edge_value):
    n = len(region)
    ksum = np.bincount(region[region >= 0], weights=kappa[region >= 0], minlength=nreg).tolist()
    kcnt = np.bincount(region[region >= 0], minlength=nreg).astype(float).tolist()
    # boundary statistics between region pairs: (sum of kappa, count)
    bound: dict[int, dict[int, list]] = {i: {} for i in range(nreg)}
    reg_l = region.tolist()
    kap = kappa.tolist()

    def add(a, b, kv):
        if a == b:
            return
        if a > b:
            a, b = b, a
        st = bound[a].setdefault(b, [0.0, 0])
        st[0] += kv
        st[1] += 1
        bound[b][a] = st

    for p in range(n):
        rp = reg_l[p]
        if rp >= 0:
            for q in nb[ip[p]:ip[p + 1]]:
                rq = reg_l[q]
                if rq >= 0 and rq != rp:
                    add(rp, rq, kap[p])
        else:
            touching = sorted({reg_l[q] for q in nb[ip[p]:ip[p + 1]] if reg_l[q] >= 0})
            for i in range(len(touching)):
                for j in range(i + 1, len(touching)):
                    add(touching[i], touching[j], kap[p])

    alive = [True] * nreg
    version = [0] * nreg

    def weight(a, b):
        st = bound[a][b]
        return abs(ksum[a] / kcnt[a] - ksum[b] / kcnt[b]) + st[0] / st[1]

    heap = []
    for a in range(nreg):
        for b in bound[a]:
            if a < b:
                heap.append((weight(a, b), a, b, 0, 0))
    heapq.heapify(heap)
    count = nreg
    parent = list(range(nreg))
    while heap and (target_count is None or count > target_count):
        w, a, b, va, vb = heapq.heappop(heap)
        if not (alive[a] and alive[b]) or va != version[a] or vb != version[b]:
            continue
        if max_edge_value is not None and w > max_edge_value:
            break
        # merge b into a
        alive[b] = False
        parent[b] = a
        ksum[a] += ksum[b]
        kcnt[a] += kcnt[b]
        del bound[a][b]
        for c, st in list(bound[b].items()):
            if c == a:
                continue
            del bound[c][b]
            if c in bound[a]:
                cur = bound[a][c]
                cur[0] += st[0]
                cur[1] += st[1]
            else:
                merged = [st[0], st[1]]
                bound[a][c] = merged
                bound[c][a] = merged
        bound[b] = {}
        version[a] += 1
        count -= 1
        for c in bound[a]:
            lo, hi = (a, c) if a < c else (c, a)
            heapq.heappush(heap, (weight(lo, hi), lo, hi, version[lo], version[hi]))

    def root(x):
        while parent[x] != x:
            x = parent[x]
        return x

    roots = np.array([root(i) for i in range(nreg)], dtype=np.int64)
    return np.where(region >= 0, roots[np.maximum(region, 0)], -1)


def _assign_edges(pts, regions, indptr, indices, r, fit_count=8):
    """Attach unlabeled (edge) points to regions.

    Candidates are the regions of the same graph component whose nearest
    labeled point lies within ``r`` of the closest region.  For each candidate
    a plane is fitted to its ``fit_count`` nearest labeled points; the point
    joins the region whose plane passes closest (lowest region id on ties).
    """
    labels = regions.copy()
    pending = np.flatnonzero(labels < 0)
    if len(pending) == 0:
        return labels
    n = len(labels)
    rows = np.repeat(np.arange(n), np.diff(indptr))
    graph = sp.csr_matrix((np.ones(len(indices)), (rows, indices)), shape=(n, n))
    _, comp = connected_components(graph, directed=False)
    region_ids = np.unique(labels[labels >= 0])
    q = pts[pending]
    nearest = np.full((len(region_ids), len(pending)), np.inf)
    residual = np.full((len(region_ids), len(pending)), np.inf)
    for j, reg in enumerate(region_ids.tolist()):
        members = np.flatnonzero(labels == reg)
        same = comp[pending] == comp[members[0]]
        if not same.any():
            continue
        kk = min(fit_count, len(members))
        d, idx = cKDTree(pts[members]).query(q[same], k=kk)
        d = d.reshape(len(d), -1)
        idx = idx.reshape(len(idx), -1)
        nearest[j, same] = d[:, 0]
        if kk < 3:
            residual[j, same] = d[:, 0]
            continue
        nb = pts[members][idx]
        center = nb.mean(axis=1)
        cen = nb - center[:, None, :]
        _, vecs = np.linalg.eigh(np.einsum("tki,tkj->tij", cen, cen))
        residual[j, same] = np.abs(np.einsum("ti,ti->t", q[same] - center, vecs[:, :, 0]))
    closest = nearest.min(axis=0)
    residual[nearest > closest + r] = np.inf
    pick = np.argmin(residual, axis=0)
    ok = np.isfinite(residual[pick, np.arange(len(pending))])
    labels[pending[ok]] = region_ids[pick[ok]]
    rest = pending[~ok]
    if len(rest):
        # edge-only components become regions of their own
        _, pocket = connected_components(graph[rest][:, rest], directed=False)
        labels[rest] = labels.max() + 1 + pocket
    return labels


def _segmentation_from_labels(raw: np.ndarray, crit: np.ndarray, params: dict) -> Segmentation:
    uniq = np.unique(raw)
    tops = []
    for u in uniq:
        members = np.flatnonzero(raw == u)
        tops.append(int(members[np.argmax(crit[members])]))
    tops = np.array(tops, dtype=np.int64)
    order = np.lexsort((tops, -crit[tops]))
    lookup = np.empty(int(uniq.max()) + 1, dtype=np.int64)
    lookup[uniq[order]] = np.arange(len(uniq))
    return Segmentation(lookup[raw], tops[order], crit[tops[order]], None, params)


# ----------------------------------------------------------------------------
# type re-clustering


def recluster_by_type(seg: Segmentation | None = None, criterion: np.ndarray | None = None,
                      type_count: int | None = None, threshold: float | None = None) -> TypeGrouping:
    """Group segments into types by single linkage of one value per segment.

    ``criterion`` defaults to the segments' maximum values.  Exactly one of
    ``type_count`` and ``threshold`` must be given; with a threshold every
    gap not exceeding it is merged.
    """
    if criterion is None:
        if seg is None:
            raise InvalidInputError("need a segmentation or criterion values")
        criterion = seg.segment_max_value
    values = np.asarray(criterion, dtype=np.float64)
    if len(values) < 1:
        raise InvalidInputError("need at least one segment")
    if (type_count is None) == (threshold is None):
        raise InvalidInputError("give exactly one of type_count and threshold")
    if type_count is not None:
        if not 1 <= type_count <= len(values):
            raise InvalidInputError(f"type count {type_count} exceeds segment count {len(values)}")
        types = single_linkage_groups(values, type_count)
    else:
        if threshold < 0:
            raise InvalidInputError("threshold must be nonnegative")
        types = single_linkage_threshold(values, threshold)
    return TypeGrouping(types, int(types.max()) + 1, merge_gaps(values))


def clustering_balance(values, k_range=None) -> BalanceResult:
    """Intra- plus inter-group squared error of 1D single-linkage groupings.

    For each ``k`` the values are cut into ``k`` groups; the score is the sum of
    squared deviations from group means plus the sum of squared deviations of
    the group means from the overall mean.  The argmin prefers smaller ``k``.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if len(v) < 2:
        raise InvalidInputError("need at least 2 values")
    ks = np.arange(1, len(v) + 1) if k_range is None else np.asarray(list(k_range), dtype=np.int64)
    mean = v.mean()
    intra = np.empty(len(ks))
    inter = np.empty(len(ks))
    for i, k in enumerate(ks):
        labels = single_linkage_groups(v, int(k))
        cents = np.array([v[labels == g].mean() for g in range(int(k))])
        intra[i] = float(((v - cents[labels]) ** 2).sum())
        inter[i] = float(((cents - mean) ** 2).sum())
    scores = intra + inter
    best = int(ks[int(np.argmin(scores))])
    return BalanceResult(ks, scores, intra, inter, best)
