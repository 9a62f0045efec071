"""Heat kernel, heat kernel signatures, diffusion-time schedules and feature vectors."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import DisconnectedModelError, InvalidInputError, MemoryGuardError
from .laplacian import CLAMP_TOL, EigenSystem

if TYPE_CHECKING:
    from .segmentation import Segmentation

DEFAULT_HEAT_KERNEL_CAP = 20_000
LN10 = math.log(10.0)


@dataclass(frozen=True)
class HksField:
    """Heat kernel signature values, one row per point and one column per diffusion time."""

    t_scales: np.ndarray
    values: np.ndarray
    eig_count: int

    def column(self, t: float) -> np.ndarray:
        return self.values[:, self.scale_index(t)]

    def scale_index(self, t: float) -> int:
        hits = np.flatnonzero(self.t_scales == t)
        if len(hits) == 0:
            raise InvalidInputError(f"t = {t!r} is not one of the field's scales")
        return int(hits[0])


@dataclass(frozen=True)
class HeatKernelMatrix:
    """Dense heat kernel at one diffusion time."""

    t: float
    entries: np.ndarray
    has_negative: bool = False

    @property
    def n(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class FeatureVector:
    """m x m matrix of signature values at m feature points and m scales, max-normalized."""

    rows: np.ndarray
    feature_point_ids: np.ndarray
    normalization: float

    @property
    def m(self) -> int:
        return self.rows.shape[0]


def is_disconnected(eigs: EigenSystem) -> bool:
    """True when the second eigenvalue is numerically zero."""
    lam = eigs.eigenvalues
    if len(lam) < 2:
        return False
    return bool(lam[1] <= CLAMP_TOL * max(float(lam.max()), 1e-300))


def default_t_scales(eigs: EigenSystem, m: int) -> np.ndarray:
    """``m`` log-spaced times from ``4 ln10 / lambda_{k-1}`` to ``4 ln10 / lambda_1``."""
    if eigs.k < 2:
        raise InvalidInputError("default scales need at least 2 eigenpairs")
    if m < 1:
        raise InvalidInputError("scale count must be at least 1")
    if is_disconnected(eigs):
        raise DisconnectedModelError("second eigenvalue is zero: the cloud is disconnected at this radius")
    lam = eigs.eigenvalues
    lo = 4.0 * LN10 / lam[-1]
    hi = 4.0 * LN10 / lam[1]
    if m == 1:
        return np.array([lo])
    t = np.geomspace(lo, hi, m)
    t[0] = lo
    t[-1] = hi
    return t


def compute_hks(eigs: EigenSystem, t_scales: Sequence[float]) -> HksField:
    """``values[x, j] = sum_i exp(-lambda_i t_j) phi_i(x)^2`` including the constant term."""
    t = np.asarray(t_scales, dtype=np.float64).ravel()
    if len(t) == 0 or not np.all(t > 0):
        raise InvalidInputError("diffusion times must be positive")
    decay = np.exp(-np.outer(eigs.eigenvalues, t))
    values = (eigs.eigenvectors ** 2) @ decay
    return HksField(t.copy(), values, eigs.k)


def compute_heat_kernel(eigs: EigenSystem, t: float, max_points: int = DEFAULT_HEAT_KERNEL_CAP) -> HeatKernelMatrix:
    """Dense ``k_t(x, y)`` from the truncated eigen-expansion.

    Refuses clouds larger than ``max_points``; pass a larger cap (CLI flag
    ``--heat-kernel-cap``) to override.
    """
    if not t > 0:
        raise InvalidInputError("diffusion time must be positive")
    n = eigs.n
    if n > max_points:
        raise MemoryGuardError(
            f"dense heat kernel for {n} points needs ~{8 * n * n / 1e9:.1f} GB; "
            f"cap is {max_points} points (raise it with --heat-kernel-cap)")
    phi = eigs.eigenvectors
    weighted = phi * np.exp(-eigs.eigenvalues * t)
    k = weighted @ phi.T
    k = 0.5 * (k + k.T)
    return HeatKernelMatrix(float(t), k, bool((k < 0).any()))


def build_feature_vector(hks: HksField, seg: "Segmentation", m: int) -> FeatureVector:
    """Feature matrix from the per-segment signature maxima.

    One feature point per segment: the point with the largest value at the
    segmentation's reference scale (lowest id on ties).  Rows hold the first
    ``m`` scales, ordered by descending reference value, and the matrix is
    divided by its largest entry.
    """
    if seg.segment_count != m:
        raise InvalidInputError(f"feature vector needs exactly {m} segments, segmentation has {seg.segment_count}")
    if hks.values.shape[1] < m:
        raise InvalidInputError(f"feature vector needs {m} scales, field has {hks.values.shape[1]}")
    if seg.reference_scale is None:
        raise InvalidInputError("segmentation has no reference scale")
    ref = hks.column(seg.reference_scale)
    ids = np.empty(m, dtype=np.int64)
    for s in range(m):
        members = np.flatnonzero(seg.labels == s)
        ids[s] = members[np.argmax(ref[members])]
    order = np.lexsort((ids, -ref[ids]))
    ids = ids[order]
    rows = hks.values[ids, :m]
    top = float(rows.max())
    return FeatureVector(rows / top, ids, top)
