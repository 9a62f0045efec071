"""Symmetric point-cloud Laplacian assembly and its generalized eigenproblem."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from . import kernels
from .clustering1d import kmeans_1d
from .errors import DegenerateNeighborhoodError, InvalidInputError, SolverError
from .geometry import MIN_AREA_FACTOR, CloudLike, PointCloud, _checked_frames, as_points, estimate_spacing

#: assembly radius as a multiple of the Gaussian bandwidth
TRUNCATION = 6.0
BANDWIDTH_FACTOR = 0.8
RESOLUTION_EXPONENT = 0.2
#: eigenvalues within this fraction of the largest below zero are clamped to 0
CLAMP_TOL = 1e-8
ZERO_SNAP = 1e-12


@dataclass(frozen=True)
class SpclOperator:
    """Sparse symmetric stiffness matrix and diagonal mass of a point cloud.

    ``stiffness`` is CSR with sorted indices; off-diagonals are nonpositive and
    each diagonal is minus the sum of its row's off-diagonals.
    """

    stiffness: sp.csr_matrix
    mass: np.ndarray
    radius_r: float
    bandwidth_eps: float
    normals: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.stiffness.shape[0]


@dataclass(frozen=True)
class EigenSystem:
    """Ascending eigenvalues and mass-orthonormal eigenvectors (columns)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    mass: np.ndarray
    min_raw_eigenvalue: float = 0.0
    residuals: np.ndarray | None = field(default=None, repr=False)

    @property
    def k(self) -> int:
        return len(self.eigenvalues)

    @property
    def n(self) -> int:
        return self.eigenvectors.shape[0]


def adaptive_bandwidth(cloud: CloudLike, factor: float = BANDWIDTH_FACTOR,
                       exponent: float = RESOLUTION_EXPONENT) -> float:
    """Gaussian bandwidth that shrinks more slowly than the sample spacing.

    ``eps = factor * h * (D / h) ** exponent`` with h the mean spacing and D
    twice the largest distance from the centroid.  D is rotation invariant
    (unlike the bounding-box diagonal) and scales with the cloud.
    """
    h = estimate_spacing(cloud)
    return factor * h * (cloud_extent(cloud) / h) ** exponent


def cloud_extent(cloud: CloudLike) -> float:
    """Twice the largest distance from the centroid."""
    pts = as_points(cloud)
    return 2.0 * float(np.sqrt(((pts - pts.mean(axis=0)) ** 2).sum(axis=1).max()))


def resolve_radius(cloud: CloudLike, radius_multiplier: float | None = None,
                   bandwidth_factor: float = BANDWIDTH_FACTOR,
                   resolution_exponent: float = RESOLUTION_EXPONENT) -> tuple[float, float]:
    """Assembly radius and bandwidth ``(r, eps)``.

    With ``radius_multiplier`` the radius is ``multiplier * h``; otherwise it is
    ``TRUNCATION`` bandwidths of the adaptive bandwidth.  Either way
    ``eps = r / TRUNCATION``.
    """
    if radius_multiplier is not None:
        if not radius_multiplier > 0:
            raise InvalidInputError("radius multiplier must be positive")
        r = radius_multiplier * estimate_spacing(cloud)
    else:
        r = TRUNCATION * adaptive_bandwidth(cloud, bandwidth_factor, resolution_exponent)
    return r, r / TRUNCATION


def assemble_spcl(cloud: CloudLike, r: float | None = None, eps: float | None = None,
                  backend: str | None = None) -> SpclOperator:
    """Assemble the symmetric point-cloud Laplacian.

    Parameters
    ----------
    cloud : PointCloud or (n, 3) array
    r : float, optional
        Neighborhood radius; defaults to the adaptive radius of :func:`resolve_radius`.
    eps : float, optional
        Gaussian bandwidth; defaults to ``r / TRUNCATION``.
    backend : {"compiled", "python"}, optional
        Kernel implementation; defaults to the one selected at import.

    Raises
    ------
    InsufficientSamplingError
        Some points have fewer than 3 points in their ball (all ids listed).
    DegenerateNeighborhoodError
        Some neighborhoods are collinear or drop their own center.
    """
    pts = np.ascontiguousarray(as_points(cloud), dtype=np.float64)
    n = len(pts)
    if n < 3:
        raise InvalidInputError("assembly needs at least 3 points")
    if r is None:
        r, default_eps = resolve_radius(cloud)
    else:
        if not r > 0:
            raise InvalidInputError("radius must be positive")
        default_eps = r / TRUNCATION
    eps = default_eps if eps is None else float(eps)
    if not eps > 0:
        raise InvalidInputError("bandwidth must be positive")
    h = cloud.spacing_h if isinstance(cloud, PointCloud) else estimate_spacing(pts)

    indptr, indices, origins, bases, _ = _checked_frames(cloud, r)
    kern = kernels.get_backend(backend)
    rows, cols, vals, center_area, status = kern.assemble_rows(
        pts, indptr, indices, np.ascontiguousarray(origins), np.ascontiguousarray(bases),
        float(eps), MIN_AREA_FACTOR * h * h)
    bad = np.flatnonzero(np.asarray(status) != kernels.STATUS_OK)
    if len(bad):
        raise DegenerateNeighborhoodError(f"{len(bad)} neighborhood(s) could not be triangulated around their center", bad)

    w = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    sym = (w + w.T).tocsr()
    sym.data *= 0.5
    sym.eliminate_zeros()
    diag = -np.asarray(sym.sum(axis=1)).ravel()
    stiffness = (sym + sp.diags(diag)).tocsr()
    stiffness.sort_indices()
    mass = np.asarray(center_area) / 3.0
    return SpclOperator(stiffness, mass, float(r), float(eps), bases[:, 2].copy())


def _transformed(op: SpclOperator) -> tuple[sp.csr_matrix, np.ndarray]:
    s = 1.0 / np.sqrt(op.mass)
    coo = op.stiffness.tocoo()
    data = coo.data * (s[coo.row] * s[coo.col])
    c = sp.csr_matrix((data, (coo.row, coo.col)), shape=op.stiffness.shape)
    return c, s


def solve_eigs(op: SpclOperator, k: int, seed: int = 0, tol: float = 0.0,
               maxiter: int | None = None) -> EigenSystem:
    """Smallest ``k`` eigenpairs of ``stiffness @ phi = lambda * mass * phi``.

    The problem is made standard with the diagonal ``mass ** -1/2`` transform and
    solved by shift-invert Lanczos (ARPACK) just below zero, started from a
    seeded random vector.  Eigenvectors are returned mass-orthonormal with a
    deterministic sign (largest-magnitude entry positive).
    """
    n = op.n
    if not 1 <= k <= n - 1:
        raise InvalidInputError(f"eigenpair count must be in [1, {n - 1}], got {k}")
    c, s = _transformed(op)
    scale = float(np.abs(c.diagonal()).max()) or 1.0
    sigma = -1e-6 * scale
    v0 = np.random.default_rng(seed).standard_normal(n)
    if maxiter is None:
        maxiter = max(50 * k, 1000)
    try:
        lam, vec = eigsh(c, k=k, sigma=sigma, which="LM", v0=v0, tol=tol, maxiter=maxiter)
    except ArpackNoConvergence as exc:
        res = _residuals(c, exc.eigenvalues, exc.eigenvectors) if len(exc.eigenvalues) else []
        raise SolverError(f"eigensolver did not converge ({len(exc.eigenvalues)} of {k} pairs)", res) from exc
    order = np.argsort(lam, kind="stable")
    lam = lam[order]
    vec = vec[:, order]
    res = _residuals(c, lam, vec)
    if np.any(res > 1e-6 * scale):
        raise SolverError("eigenpair residuals exceed tolerance", res)

    lam_max = float(lam.max()) if len(lam) else 0.0
    raw_min = float(lam.min())
    if raw_min < -CLAMP_TOL * max(lam_max, 0.0) and raw_min < -CLAMP_TOL * scale:
        raise SolverError(f"spectrum has a significantly negative eigenvalue {raw_min:.3e}", res)
    # negatives and round-off residue of the constant mode become exact zeros
    lam = np.where(lam < ZERO_SNAP * scale, 0.0, lam)

    phi = vec * s[:, None]
    idx = np.argmax(np.abs(phi), axis=0)
    signs = np.where(phi[idx, np.arange(k)] < 0, -1.0, 1.0)
    phi = phi * signs
    return EigenSystem(lam, phi, op.mass.copy(), raw_min, res)


def _residuals(c: sp.csr_matrix, lam: np.ndarray, vec: np.ndarray) -> np.ndarray:
    return np.linalg.norm(c @ vec - vec * lam, axis=0)


def row_neighbors(op: SpclOperator, i: int) -> list[tuple[int, float]]:
    """Nonzero off-diagonal entries of row ``i``, largest magnitude first, index ascending on ties."""
    a = op.stiffness
    lo, hi = a.indptr[i], a.indptr[i + 1]
    cols = a.indices[lo:hi]
    vals = a.data[lo:hi]
    keep = (cols != i) & (vals != 0.0)
    cols, vals = cols[keep], vals[keep]
    order = np.lexsort((cols, -np.abs(vals)))
    return [(int(cols[j]), float(vals[j])) for j in order]


@dataclass(frozen=True)
class RingEstimate:
    """Three nested neighbor sets ordered from the strongest weight cluster outwards."""

    inner: frozenset
    middle: frozenset
    outer: frozenset
    degenerate: bool = False


def ring_estimate(op: SpclOperator, i: int) -> RingEstimate:
    """Group a row's neighbors into nested rings by clustering their weight magnitudes."""
    nbrs = row_neighbors(op, i)
    if len(nbrs) < 3:
        raise InvalidInputError(f"row {i} has fewer than 3 nonzero off-diagonals")
    ids = np.array([j for j, _ in nbrs])
    mags = np.array([abs(w) for _, w in nbrs])
    distinct = np.unique(mags)
    if len(distinct) < 3:
        warnings.warn(f"row {i} has fewer than 3 distinct weights; ring nesting is degenerate", stacklevel=2)
        top = frozenset(ids[mags == distinct[-1]].tolist())
        everything = frozenset(ids.tolist())
        return RingEstimate(top, top, everything, degenerate=True)
    labels, centers = kmeans_1d(mags, [mags.min(), np.median(mags), mags.max()])
    rank = np.argsort(-centers, kind="stable")
    first = frozenset(ids[labels == rank[0]].tolist())
    second = first | frozenset(ids[labels == rank[1]].tolist())
    return RingEstimate(first, second, frozenset(ids.tolist()))


def operator_checks(op: SpclOperator) -> dict[str, float]:
    """Numbers behind the operator invariants, for reports and tests."""
    a = op.stiffness
    diff = a - a.T
    diag = a.diagonal()
    rows = np.asarray(a.sum(axis=1)).ravel()
    off = a - sp.diags(diag)
    return {
        "asymmetric_entries": float(diff.count_nonzero()),
        "max_row_sum": float(np.abs(rows).max()),
        "max_diagonal": float(np.abs(diag).max()),
        "max_offdiagonal": float(off.data.max()) if off.nnz else 0.0,
        "min_diagonal": float(diag.min()),
        "min_mass": float(op.mass.min()),
    }


def bandwidth_constant(eps: float) -> float:
    """Normalization constant of the Gaussian weights, ``4 / (pi * (2 eps)^4)``."""
    return 4.0 / (math.pi * (2.0 * eps) ** 4)
