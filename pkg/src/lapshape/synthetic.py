"""Synthetic point clouds with ground-truth labels, and the noise model.

Composite shapes are unions of solids.  Each solid contributes surface
pieces sampled uniformly by area; a sample is kept only if it lies outside
every other solid, so the union's outer surface is sampled uniformly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .geometry import PointCloud, estimate_spacing

EVEN_OVERSAMPLE = 8
PRIMITIVE_KINDS = ("sphere", "cube-surface", "cylinder", "fused-spheres", "dumbbell", "twin-cylinders",
                   "limbed", "house")


@dataclass(frozen=True)
class NoiseSpec:
    """Per-axis Gaussian displacement: mean ``mu`` (length), std ``sigma_p * h``."""

    mu: float = 0.0
    sigma_p: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.sigma_p >= 0:
            raise InvalidInputError("sigma_p must be nonnegative")


def add_noise(cloud: PointCloud, spec: NoiseSpec, spacing: float | None = None) -> PointCloud:
    """Displace every coordinate by an independent normal draw.

    The spacing ``h`` is taken from the input cloud unless given, so noising a
    noisy cloud again uses the caller's frozen value.
    """
    h = cloud.spacing_h if spacing is None else float(spacing)
    rng = np.random.default_rng(spec.seed)
    disp = rng.normal(spec.mu, spec.sigma_p * h, size=cloud.points.shape)
    return PointCloud(cloud.points + disp)


def random_rotation(seed: int) -> np.ndarray:
    """A uniformly random proper rotation matrix."""
    q, r = np.linalg.qr(np.random.default_rng(seed).standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


# ----------------------------------------------------------------------------
# surface pieces and solids


class _Piece:
    area: float

    def sample(self, k: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError


class _SpherePiece(_Piece):
    def __init__(self, center, radius):
        self.c = np.asarray(center, dtype=float)
        self.r = float(radius)
        self.area = 4 * math.pi * self.r ** 2

    def sample(self, k, rng):
        u = rng.standard_normal((k, 3))
        u /= np.linalg.norm(u, axis=1)[:, None]
        return self.c + self.r * u


class _EllipsoidPiece(_Piece):
    def __init__(self, center, axes):
        self.c = np.asarray(center, dtype=float)
        self.ax = np.asarray(axes, dtype=float)
        a, b, c = self.ax
        p = 1.6075
        self.area = 4 * math.pi * (((a * b) ** p + (a * c) ** p + (b * c) ** p) / 3) ** (1 / p)

    def sample(self, k, rng):
        a, b, c = self.ax
        out = []
        bound = max(b * c, a * c, a * b)
        while sum(len(x) for x in out) < k:
            u = rng.standard_normal((2 * k, 3))
            u /= np.linalg.norm(u, axis=1)[:, None]
            g = np.sqrt((b * c * u[:, 0]) ** 2 + (a * c * u[:, 1]) ** 2 + (a * b * u[:, 2]) ** 2)
            acc = rng.random(2 * k) * bound < g
            out.append(u[acc])
        u = np.concatenate(out)[:k]
        return self.c + u * self.ax


def _frame_for(axis):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(axis, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    return axis, e1, e2


class _TubePiece(_Piece):
    """Lateral surface of a finite cylinder from ``a`` to ``b``."""

    def __init__(self, a, b, radius):
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.r = float(radius)
        self.length = float(np.linalg.norm(self.b - self.a))
        self.axis, self.e1, self.e2 = _frame_for(self.b - self.a)
        self.area = 2 * math.pi * self.r * self.length

    def sample(self, k, rng):
        t = rng.random(k) * self.length
        th = rng.random(k) * 2 * math.pi
        return (self.a + t[:, None] * self.axis
                + self.r * (np.cos(th)[:, None] * self.e1 + np.sin(th)[:, None] * self.e2))


class _DiskPiece(_Piece):
    def __init__(self, center, normal, radius):
        self.c = np.asarray(center, dtype=float)
        self.r = float(radius)
        _, self.e1, self.e2 = _frame_for(normal)
        self.area = math.pi * self.r ** 2

    def sample(self, k, rng):
        rad = self.r * np.sqrt(rng.random(k))
        th = rng.random(k) * 2 * math.pi
        return self.c + rad[:, None] * (np.cos(th)[:, None] * self.e1 + np.sin(th)[:, None] * self.e2)


class _PolygonPiece(_Piece):
    """Planar convex polygon, sampled through a triangle fan."""

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        self.tris = np.array([[v[0], v[i], v[i + 1]] for i in range(1, len(v) - 1)])
        cr = np.cross(self.tris[:, 1] - self.tris[:, 0], self.tris[:, 2] - self.tris[:, 0])
        self.tri_area = 0.5 * np.linalg.norm(cr, axis=1)
        self.area = float(self.tri_area.sum())

    def sample(self, k, rng):
        return sample_triangles(self.tris, k, rng)


def sample_triangles(tris: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Area-weighted uniform samples on triangles ``(T, 3, 3)`` via the square-root warp."""
    cr = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
    areas = 0.5 * np.linalg.norm(cr, axis=1)
    total = areas.sum()
    if not total > 0:
        raise InvalidInputError("mesh has zero total area")
    which = rng.choice(len(tris), size=k, p=areas / total)
    r1 = np.sqrt(rng.random(k))[:, None]
    r2 = rng.random(k)[:, None]
    t = tris[which]
    return (1 - r1) * t[:, 0] + r1 * (1 - r2) * t[:, 1] + r1 * r2 * t[:, 2]


class _Solid:
    def __init__(self, pieces, inside, piece_labels=None):
        self.pieces = pieces
        self.inside = inside
        self.piece_labels = piece_labels


def _sphere_solid(center, radius):
    c = np.asarray(center, dtype=float)
    return _Solid([_SpherePiece(c, radius)], lambda p: np.linalg.norm(p - c, axis=1) < radius * (1 - 1e-9))


def _ellipsoid_solid(center, axes):
    c = np.asarray(center, dtype=float)
    ax = np.asarray(axes, dtype=float)
    return _Solid([_EllipsoidPiece(c, ax)], lambda p: (((p - c) / ax) ** 2).sum(axis=1) < 1 - 1e-9)


def _cylinder_solid(a, b, radius, caps=True):
    tube = _TubePiece(a, b, radius)
    pieces = [tube]
    if caps:
        pieces += [_DiskPiece(a, tube.axis, radius), _DiskPiece(b, tube.axis, radius)]
    a_ = tube.a
    axis = tube.axis
    length = tube.length

    def inside(p):
        d = p - a_
        t = d @ axis
        radial = np.linalg.norm(d - t[:, None] * axis, axis=1)
        eps = 1e-9 * max(radius, length)
        return (t > eps) & (t < length - eps) & (radial < radius - eps)

    return _Solid(pieces, inside)


def _capsule_solids(a, b, radius):
    return [_cylinder_solid(a, b, radius, caps=False), _sphere_solid(a, radius), _sphere_solid(b, radius)]


def _convex_polyhedron_solid(faces):
    pieces = [_PolygonPiece(f) for f in faces]
    planes = []
    centroid = np.mean([np.mean(f, axis=0) for f in faces], axis=0)
    for f in faces:
        f = np.asarray(f, dtype=float)
        nrm = np.cross(f[1] - f[0], f[2] - f[0])
        nrm /= np.linalg.norm(nrm)
        off = nrm @ f[0]
        if nrm @ centroid > off:
            nrm, off = -nrm, -off
        planes.append((nrm, off))

    def inside(p):
        ok = np.ones(len(p), dtype=bool)
        for nrm, off in planes:
            ok &= p @ nrm < off - 1e-9
        return ok

    return _Solid(pieces, inside)


def _sample_union(solids, n, rng, labels_of_solid=None, piece_labels=None):
    """Uniform samples on the outer surface of a union of solids.

    Returns points and, per point, the index of the (solid, piece) it came from
    mapped through ``labels_of_solid`` or ``piece_labels``.
    """
    flat = [(si, pi, piece) for si, s in enumerate(solids) for pi, piece in enumerate(s.pieces)]
    areas = np.array([p.area for _, _, p in flat])
    probs = areas / areas.sum()
    pts_out = []
    lab_out = []
    got = 0
    while got < n:
        batch = max(2 * (n - got), 256)
        counts = rng.multinomial(batch, probs)
        for (si, pi, piece), k in zip(flat, counts):
            if k == 0:
                continue
            p = piece.sample(int(k), rng)
            keep = np.ones(len(p), dtype=bool)
            for sj, other in enumerate(solids):
                if sj != si:
                    keep &= ~other.inside(p)
            p = p[keep]
            if piece_labels is not None:
                lab = piece_labels[si][pi]
            elif labels_of_solid is not None:
                lab = labels_of_solid[si]
            else:
                lab = si
            pts_out.append(p)
            lab_out.append(np.full(len(p), lab, dtype=np.int64))
            got += len(p)
    pts = np.concatenate(pts_out)
    lab = np.concatenate(lab_out)
    # interleave deterministically so the first n are not biased toward early pieces
    perm = rng.permutation(len(pts))[:n]
    perm.sort()
    mix = rng.permutation(n)
    return pts[perm][mix], lab[perm][mix]


# ----------------------------------------------------------------------------
# public generators


def farthest_point_subset(points: np.ndarray, n: int) -> np.ndarray:
    """Indices of ``n`` points chosen greedily to maximize the distance to those already chosen.

    Starts from index 0; ties go to the lowest index.
    """
    pts = np.asarray(points, dtype=np.float64)
    if not 1 <= n <= len(pts):
        raise InvalidInputError(f"cannot pick {n} of {len(pts)} points")
    chosen = np.empty(n, dtype=np.int64)
    chosen[0] = 0
    dist = np.linalg.norm(pts - pts[0], axis=1)
    for i in range(1, n):
        j = int(np.argmax(dist))
        chosen[i] = j
        np.minimum(dist, np.linalg.norm(pts - pts[j], axis=1), out=dist)
    return np.sort(chosen)


def generate_primitive(kind: str, n: int, seed: int = 0, gap: float = 4.0,
                       even: bool = False) -> tuple[PointCloud, np.ndarray | None]:
    """Sample a synthetic surface.

    Parameters
    ----------
    kind : str
        One of ``PRIMITIVE_KINDS``.
    n : int
        Number of points (at least 100).
    seed : int
        Random seed; output is deterministic per seed.
    gap : float
        For ``twin-cylinders``: surface gap between the two cylinders in units
        of the final cloud's spacing.
    even : bool
        Draw ``EVEN_OVERSAMPLE * n`` uniform samples and keep a farthest-point
        subset of ``n``.  Density stays uniform but sampling holes vanish, so
        small fixed radii (about 3 spacings) keep every point supported.

    Returns
    -------
    PointCloud, labels
        ``labels`` is a per-point ground-truth id (face, sphere, bulb or
        component) or ``None`` for the plain sphere.
    """
    if n < 100:
        raise InvalidInputError("generators need n >= 100")
    if kind == "twin-cylinders":
        return _twin_cylinders(n, np.random.default_rng(seed), gap, even)
    if even:
        cloud, labels = generate_primitive(kind, EVEN_OVERSAMPLE * n, seed)
        keep = farthest_point_subset(cloud.points, n)
        return PointCloud(cloud.points[keep]), None if labels is None else labels[keep]
    rng = np.random.default_rng(seed)
    if kind == "sphere":
        u = rng.standard_normal((n, 3))
        u /= np.linalg.norm(u, axis=1)[:, None]
        return PointCloud(u), None
    if kind == "cube-surface":
        return _cube_surface(n, rng)
    if kind == "cylinder":
        s = _cylinder_solid([0, 0, -1], [0, 0, 1], 0.5)
        pts, lab = _sample_union([s], n, rng, piece_labels=[[0, 1, 2]])
        return PointCloud(pts), lab
    if kind == "fused-spheres":
        solids = []
        for i in range(8):
            ang = 2 * math.pi * i / 8
            solids.append(_sphere_solid([1.8 * math.cos(ang), 1.8 * math.sin(ang), 0.0], 1.0 if i % 2 == 0 else 0.6))
        pts, lab = _sample_union(solids, n, rng)
        return PointCloud(pts), lab
    if kind == "dumbbell":
        solids = [_sphere_solid([-2.2, 0, 0], 1.0), _sphere_solid([2.2, 0, 0], 1.0),
                  _cylinder_solid([-2.2, 0, 0], [2.2, 0, 0], 0.3, caps=False)]
        pts, lab = _sample_union(solids, n, rng)
        return PointCloud(pts), lab
    if kind == "limbed":
        return _limbed(n, rng)
    if kind == "house":
        return _house(n, rng)
    raise InvalidInputError(f"unknown primitive kind {kind!r}; choose from {', '.join(PRIMITIVE_KINDS)}")


def _cube_surface(n, rng):
    face = rng.integers(0, 6, size=n)
    uv = rng.random((n, 2))
    pts = np.empty((n, 3))
    axis = face // 2
    side = (face % 2).astype(float)
    for ax in range(3):
        m = axis == ax
        others = [a for a in range(3) if a != ax]
        pts[m, ax] = side[m]
        pts[m, others[0]] = uv[m, 0]
        pts[m, others[1]] = uv[m, 1]
    return PointCloud(pts), face.astype(np.int64)


def _twin_cylinders(n, rng, gap, even):
    radius = 0.5
    na = (n + 1) // 2
    nb = n - na
    solid = _cylinder_solid([0, 0, -1], [0, 0, 1], radius)
    if even:
        a, _ = _sample_union([solid], EVEN_OVERSAMPLE * na, rng)
        a = a[farthest_point_subset(a, na)]
    else:
        a, _ = _sample_union([solid], na, rng)
    far = np.vstack([a, a[:nb] + [1e6, 0, 0]])
    h = estimate_spacing(far)
    delta = gap * h * (1 + 1e-6)
    shift = 2 * radius + delta
    pts = np.vstack([a, a[:nb] + [shift, 0, 0]])
    labels = np.concatenate([np.zeros(na, dtype=np.int64), np.ones(nb, dtype=np.int64)])
    return PointCloud(pts), labels


def _limbed(n, rng):
    """Body with four legs of different lengths, a head on a neck and a tail.

    Labels: 0 body, 1-4 legs, 5 head and neck, 6 tail.
    """
    solids = [_ellipsoid_solid([0, 0, 0], [1.3, 0.7, 0.6])]
    labels = [0]
    legs = [([0.7, 0.35, -0.2], [0.9, 0.55, -1.4]), ([0.7, -0.35, -0.2], [0.85, -0.6, -1.2]),
            ([-0.7, 0.35, -0.2], [-0.95, 0.55, -1.1]), ([-0.7, -0.35, -0.2], [-0.8, -0.6, -1.5])]
    for i, (a, b) in enumerate(legs):
        caps = _capsule_solids(a, b, 0.17)
        solids += caps
        labels += [1 + i] * len(caps)
    neck = _capsule_solids([1.1, 0, 0.2], [1.6, 0, 0.7], 0.16)
    solids += neck + [_sphere_solid([1.75, 0, 0.85], 0.33)]
    labels += [5] * (len(neck) + 1)
    tail = _capsule_solids([-1.2, 0, 0.1], [-2.2, 0, 0.6], 0.09)
    solids += tail
    labels += [6] * len(tail)
    pts, lab = _sample_union(solids, n, rng, labels_of_solid=labels)
    return PointCloud(pts), lab


def _house(n, rng):
    """Box with a gable roof: sharp edges of several dihedral angles.  Labels are face ids."""
    w, d, hgt, ridge = 2.0, 1.2, 1.0, 1.6
    v = {
        "a": [0, 0, 0], "b": [w, 0, 0], "c": [w, d, 0], "d": [0, d, 0],
        "e": [0, 0, hgt], "f": [w, 0, hgt], "g": [w, d, hgt], "h": [0, d, hgt],
        "r0": [0, d / 2, ridge], "r1": [w, d / 2, ridge],
    }
    faces = [
        ["a", "d", "c", "b"],             # floor
        ["a", "b", "f", "e"],             # front
        ["c", "d", "h", "g"],             # back
        ["a", "e", "r0", "h", "d"],       # left gable
        ["b", "c", "g", "r1", "f"],       # right gable
        ["e", "f", "r1", "r0"],           # roof front
        ["h", "r0", "r1", "g"],           # roof back
    ]
    solid = _convex_polyhedron_solid([[v[k] for k in f] for f in faces])
    pts, lab = _sample_union([solid], n, rng, piece_labels=[list(range(len(faces)))])
    return PointCloud(pts), lab


def house_edges() -> list[tuple[np.ndarray, np.ndarray]]:
    """Sharp edges of the ``house`` fixture as segments ``(start, end)``."""
    w, d, hgt, ridge = 2.0, 1.2, 1.0, 1.6
    p = {
        "a": [0, 0, 0], "b": [w, 0, 0], "c": [w, d, 0], "d": [0, d, 0],
        "e": [0, 0, hgt], "f": [w, 0, hgt], "g": [w, d, hgt], "h": [0, d, hgt],
        "r0": [0, d / 2, ridge], "r1": [w, d / 2, ridge],
    }
    pairs = ["ab", "bc", "cd", "da", "ae", "bf", "cg", "dh", "ef", "hg"]
    segs = [(np.array(p[x[0]], float), np.array(p[x[1]], float)) for x in pairs]
    segs += [(np.array(p[x], float), np.array(p[y], float)) for x, y in
             [("e", "r0"), ("h", "r0"), ("f", "r1"), ("g", "r1"), ("r0", "r1")]]
    return segs


def distance_to_segments(points: np.ndarray, segments) -> np.ndarray:
    """Euclidean distance from each point to the nearest of the given line segments."""
    best = np.full(len(points), np.inf)
    for a, b in segments:
        ab = b - a
        t = np.clip(((points - a) @ ab) / (ab @ ab), 0.0, 1.0)
        d = np.linalg.norm(points - (a + t[:, None] * ab), axis=1)
        best = np.minimum(best, d)
    return best
