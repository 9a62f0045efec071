"""Point clouds, spatial queries, local tangent frames and local triangulations."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.spatial import cKDTree

from . import kernels
from .errors import DegenerateNeighborhoodError, InsufficientSamplingError, InvalidInputError

#: relative duplicate tolerance, as a fraction of the bounding-box diagonal
DUPLICATE_TOL = 1e-12
MAX_COORDINATE = 1e150
#: triangles at or below this fraction of spacing_h**2 are dropped
MIN_AREA_FACTOR = 1e-14
#: a covariance whose second eigenvalue is below this fraction of the first is treated as collinear
COLLINEAR_TOL = 1e-12


class PointCloud:
    """An ordered set of 3D points with a cached mean nearest-neighbor spacing.

    Points closer than ``1e-12 * bbox_diagonal`` to an earlier point are dropped
    on construction; the count is kept in :attr:`duplicates_dropped`.
    """

    def __init__(self, points, *, dedupe: bool = True, min_points: int = 4):
        arr = np.array(points, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise InvalidInputError(f"points must have shape (n, 3), got {arr.shape}")
        if not np.isfinite(arr).all():
            raise InvalidInputError("points contain NaN or infinite coordinates")
        if len(arr) and np.abs(arr).max() > MAX_COORDINATE:
            raise InvalidInputError(f"coordinates beyond {MAX_COORDINATE:g} would overflow squared distances")
        dropped = 0
        if dedupe and len(arr) > 1:
            keep = _unique_mask(arr)
            dropped = int(len(arr) - keep.sum())
            arr = arr[keep]
        if len(arr) < min_points:
            raise InvalidInputError(f"a point cloud needs at least {min_points} distinct points, got {len(arr)}")
        arr.setflags(write=False)
        self._points = arr
        self.duplicates_dropped = dropped
        self._spacing: float | None = None
        self._tree: cKDTree | None = None

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def n(self) -> int:
        return len(self._points)

    def __len__(self) -> int:
        return len(self._points)

    @property
    def tree(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(self._points)
        return self._tree

    @property
    def spacing_h(self) -> float:
        if self._spacing is None:
            self._spacing = _mean_nn_distance(self._points, self.tree)
        return self._spacing

    @property
    def bbox_diagonal(self) -> float:
        return float(np.linalg.norm(self._points.max(axis=0) - self._points.min(axis=0)))

    def __repr__(self) -> str:
        return f"PointCloud(n={self.n})"


CloudLike = Union[PointCloud, np.ndarray]


def as_points(cloud: CloudLike) -> np.ndarray:
    if isinstance(cloud, PointCloud):
        return cloud.points
    arr = np.asarray(cloud, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise InvalidInputError(f"points must have shape (n, 3), got {arr.shape}")
    return arr


def _tree_of(cloud: CloudLike) -> cKDTree:
    if isinstance(cloud, PointCloud):
        return cloud.tree
    return cKDTree(as_points(cloud))


def _unique_mask(arr: np.ndarray) -> np.ndarray:
    diag = float(np.linalg.norm(arr.max(axis=0) - arr.min(axis=0)))
    keep = np.ones(len(arr), dtype=bool)
    if diag == 0.0:
        keep[1:] = False
        return keep
    pairs = cKDTree(arr).query_pairs(DUPLICATE_TOL * diag, output_type="ndarray")
    if len(pairs):
        # drop the later point of every close pair, keeping the lowest index
        keep[pairs.max(axis=1)] = False
    return keep


def _mean_nn_distance(points: np.ndarray, tree: cKDTree) -> float:
    d, _ = tree.query(points, k=2)
    return float(np.mean(d[:, 1]))


def estimate_spacing(cloud: CloudLike) -> float:
    """Mean distance from each point to its nearest neighbor."""
    if isinstance(cloud, PointCloud):
        return cloud.spacing_h
    pts = as_points(cloud)
    if len(pts) < 2:
        raise InvalidInputError("spacing needs at least 2 points")
    return _mean_nn_distance(pts, cKDTree(pts))


def _distances(points: np.ndarray, center: np.ndarray, idx: np.ndarray) -> np.ndarray:
    diff = points[idx] - center
    return np.sqrt((diff * diff).sum(axis=1))


def radius_neighbors(cloud: CloudLike, center: int, r: float) -> np.ndarray:
    """Ids of points within distance ``r`` of ``center`` (center excluded).

    Sorted by distance, then by index.
    """
    if not r > 0:
        raise InvalidInputError("radius must be positive")
    pts = as_points(cloud)
    cand = np.asarray(_tree_of(cloud).query_ball_point(pts[center], r * (1 + 1e-9)), dtype=np.int64)
    cand = cand[cand != center]
    d = _distances(pts, pts[center], cand)
    ok = d <= r
    cand, d = cand[ok], d[ok]
    order = np.lexsort((cand, d))
    return cand[order]


def ball_neighborhoods(cloud: CloudLike, r: float, include_self: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """CSR neighborhoods of every point within radius ``r``, sorted by index.

    Returns ``(indptr, indices)``.  With ``include_self`` each row contains the
    point itself, which is what frame construction consumes.
    """
    if not r > 0:
        raise InvalidInputError("radius must be positive")
    pts = as_points(cloud)
    n = len(pts)
    lists = _tree_of(cloud).query_ball_point(pts, r * (1 + 1e-9), return_sorted=True)
    counts = np.fromiter((len(x) for x in lists), dtype=np.int64, count=n)
    indices = np.fromiter((j for x in lists for j in x), dtype=np.int64, count=int(counts.sum()))
    rows = np.repeat(np.arange(n, dtype=np.int64), counts)
    diff = pts[indices] - pts[rows]
    d = np.sqrt((diff * diff).sum(axis=1))
    keep = d <= r
    if not include_self:
        keep &= indices != rows
    indices = indices[keep]
    rows = rows[keep]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return indptr, indices


@dataclass(frozen=True)
class LocalFrame:
    """Tangent frame of one neighborhood.

    ``basis`` rows are the two in-plane directions followed by the normal;
    ``eigenvalues`` are the covariance eigenvalues in descending order;
    ``projected`` holds in-plane coordinates of ``neighbor_indices`` (which
    includes the center, in ascending id order).
    """

    center_index: int
    neighbor_indices: np.ndarray
    origin: np.ndarray
    basis: np.ndarray
    eigenvalues: np.ndarray
    projected: np.ndarray
    spacing_h: float

    @property
    def normal(self) -> np.ndarray:
        return self.basis[2]

    @property
    def center_position(self) -> int:
        return int(np.searchsorted(self.neighbor_indices, self.center_index))


@dataclass(frozen=True)
class LocalTriangulation:
    """Delaunay triangulation of a frame's projected points.

    ``triangles`` index into the frame's ``neighbor_indices``; ``areas`` is the
    per-vertex sum of incident triangle areas in the same order.
    """

    point_ids: np.ndarray
    triangles: np.ndarray
    triangle_areas: np.ndarray
    areas: np.ndarray

    @property
    def vertex_area(self) -> dict[int, float]:
        return {int(p): float(a) for p, a in zip(self.point_ids, self.areas)}


def frames_from_neighborhoods(points: np.ndarray, indptr: np.ndarray, indices: np.ndarray,
                              chunk: int = 4096) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Centroid, oriented basis and descending covariance eigenvalues for CSR neighborhoods.

    Every row must be nonempty.  Basis rows are (e1, e2, normal) with each
    in-plane axis signed so its largest-magnitude component is positive and
    normal = e1 x e2.
    """
    n = len(indptr) - 1
    origins = np.empty((n, 3))
    bases = np.empty((n, 3, 3))
    evals = np.empty((n, 3))
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        ip = indptr[lo:hi + 1]
        idx = indices[ip[0]:ip[-1]]
        starts = ip[:-1] - ip[0]
        counts = np.diff(ip)
        rows = np.repeat(np.arange(hi - lo), counts)
        p = points[idx]
        origin = np.add.reduceat(p, starts, axis=0) / counts[:, None]
        x = p - origin[rows]
        outer = (x[:, :, None] * x[:, None, :]).reshape(-1, 9)
        cov = (np.add.reduceat(outer, starts, axis=0) / counts[:, None]).reshape(-1, 3, 3)
        _, v = np.linalg.eigh(cov)
        e1 = v[:, :, 2]
        e2 = v[:, :, 1]
        e1 = e1 * _dominant_sign(e1)[:, None]
        e2 = e2 * _dominant_sign(e2)[:, None]
        e3 = np.cross(e1, e2)
        origins[lo:hi] = origin
        bases[lo:hi, 0] = e1
        bases[lo:hi, 1] = e2
        bases[lo:hi, 2] = e3
        # Rayleigh quotients on the data: stay near zero for exactly flat sets
        # where eigh's absolute error would be eps * largest eigenvalue
        proj = np.einsum("ij,ikj->ik", x, np.stack([e1, e2, e3], axis=1)[rows])
        evals[lo:hi] = np.add.reduceat(proj * proj, starts, axis=0) / counts[:, None]
    return origins, bases, evals


def _dominant_sign(v: np.ndarray) -> np.ndarray:
    k = np.argmax(np.abs(v), axis=1)
    return np.where(v[np.arange(len(v)), k] < 0, -1.0, 1.0)


def _collinear_rows(evals: np.ndarray) -> np.ndarray:
    return (evals[:, 0] <= 0) | (evals[:, 1] <= COLLINEAR_TOL * evals[:, 0])


def build_local_frame(cloud: CloudLike, center: int, r: float) -> LocalFrame:
    """PCA tangent frame of the ``r``-ball around ``center``."""
    pts = as_points(cloud)
    nbrs = np.sort(np.concatenate([[center], radius_neighbors(cloud, center, r)])).astype(np.int64)
    if len(nbrs) < 3:
        raise InsufficientSamplingError(f"fewer than 3 points within r={r:g}", [center])
    origins, bases, evals = frames_from_neighborhoods(pts, np.array([0, len(nbrs)]), nbrs)
    if _collinear_rows(evals)[0]:
        raise DegenerateNeighborhoodError("neighborhood is collinear", [center])
    projected = (pts[nbrs] - origins[0]) @ bases[0, :2].T
    h = cloud.spacing_h if isinstance(cloud, PointCloud) else estimate_spacing(pts)
    return LocalFrame(int(center), nbrs, origins[0], bases[0], evals[0], projected, h)


def triangulate_frame(frame: LocalFrame, min_area: float | None = None) -> LocalTriangulation:
    """Delaunay triangulation of a frame's projected points with per-vertex areas."""
    xy = np.ascontiguousarray(frame.projected, dtype=np.float64)
    m = len(xy)
    if m < 3:
        raise DegenerateNeighborhoodError("need at least 3 points to triangulate", [frame.center_index])
    if min_area is None:
        min_area = MIN_AREA_FACTOR * frame.spacing_h ** 2
    kern = kernels.backend
    tris, status = kern.triangulate(xy, np.ascontiguousarray(frame.neighbor_indices, dtype=np.int64), float(min_area))
    if status != kernels.STATUS_OK or len(tris) == 0:
        raise DegenerateNeighborhoodError("projected neighborhood is collinear", [frame.center_index])
    tris = np.ascontiguousarray(tris, dtype=np.int64)
    areas, tri_areas = kern.vertex_areas(xy, tris, m)
    return LocalTriangulation(frame.neighbor_indices.copy(), tris, np.asarray(tri_areas), np.asarray(areas))


def _checked_frames(cloud: CloudLike, r: float):
    pts = as_points(cloud)
    indptr, indices = ball_neighborhoods(cloud, r)
    counts = np.diff(indptr)
    few = np.flatnonzero(counts < 3)
    if len(few):
        raise InsufficientSamplingError(f"{len(few)} point(s) have fewer than 3 points within r={r:g}", few)
    origins, bases, evals = frames_from_neighborhoods(pts, indptr, indices)
    bad = np.flatnonzero(_collinear_rows(evals))
    if len(bad):
        raise DegenerateNeighborhoodError(f"{len(bad)} collinear neighborhood(s)", bad)
    return indptr, indices, origins, bases, evals


def estimate_normals(cloud: CloudLike, r: float) -> np.ndarray:
    """Unoriented unit normal per point from its local frame."""
    _, _, _, bases, _ = _checked_frames(cloud, r)
    return bases[:, 2].copy()


def max_normal_angle(cloud: CloudLike, normals: np.ndarray, r: float) -> np.ndarray:
    """Per point, the largest sign-folded angle between its normal and a neighbor's."""
    indptr, indices = ball_neighborhoods(cloud, r, include_self=False)
    n = len(indptr) - 1
    rows = np.repeat(np.arange(n), np.diff(indptr))
    a = normals[rows]
    b = normals[indices]
    cross = np.linalg.norm(np.cross(a, b), axis=1)
    dot = np.abs((a * b).sum(axis=1))
    ang = np.arctan2(cross, dot)
    out = np.zeros(n)
    np.maximum.at(out, rows, ang)
    return out


def detect_sharp_edges(cloud: CloudLike, normals: np.ndarray, r: float, angle_threshold: float) -> np.ndarray:
    """Sorted ids of points whose neighborhood normal angle exceeds ``angle_threshold`` radians."""
    return np.flatnonzero(max_normal_angle(cloud, normals, r) > angle_threshold)


@dataclass(frozen=True)
class UnitBoxTransform:
    """``p_normalized = (p + translation) * scale``."""

    scale: float
    translation: np.ndarray

    def apply(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points) + self.translation) * self.scale


def normalize_to_unit_box(cloud: CloudLike) -> tuple[PointCloud, UnitBoxTransform]:
    """Translate the bbox minimum to the origin and scale the largest extent to 1."""
    pts = as_points(cloud)
    lo = pts.min(axis=0)
    extent = float((pts.max(axis=0) - lo).max())
    if extent == 0.0:
        raise InvalidInputError("all points coincide; cannot normalize")
    transform = UnitBoxTransform(1.0 / extent, -lo)
    return PointCloud(transform.apply(pts)), transform
