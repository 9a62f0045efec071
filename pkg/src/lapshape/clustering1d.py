"""Small 1D clustering helpers: k-means with fixed init and single-linkage cuts."""

from __future__ import annotations

import numpy as np


def kmeans_1d(values: np.ndarray, init_centers, max_iter: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd iterations on scalars.

    Assignment ties go to the lower center index; a center that loses all its
    members keeps its previous position.  Returns ``(labels, centers)``.
    """
    values = np.asarray(values, dtype=np.float64)
    centers = np.array(init_centers, dtype=np.float64)
    labels = np.argmin(np.abs(values[:, None] - centers[None, :]), axis=1)
    for _ in range(max_iter):
        for c in range(len(centers)):
            members = values[labels == c]
            if len(members):
                centers[c] = members.mean()
        new = np.argmin(np.abs(values[:, None] - centers[None, :]), axis=1)
        if np.array_equal(new, labels):
            break
        labels = new
    return labels, centers


def single_linkage_groups(values: np.ndarray, group_count: int) -> np.ndarray:
    """Cut the 1D single-linkage dendrogram into ``group_count`` groups.

    On a line, single linkage merges neighbors in sorted order by ascending gap,
    so the cut removes the ``group_count - 1`` widest gaps (ties: the gap with
    the lower sorted position is cut first).  Group ids are dense and ordered
    by ascending value.
    """
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    if not 1 <= group_count <= n:
        raise ValueError(f"group_count must be in [1, {n}], got {group_count}")
    order = np.argsort(values, kind="stable")
    gaps = np.diff(values[order])
    cut = np.zeros(max(n - 1, 0), dtype=bool)
    if group_count > 1:
        widest = np.lexsort((np.arange(n - 1), -gaps))[: group_count - 1]
        cut[widest] = True
    sorted_labels = np.concatenate([[0], np.cumsum(cut)])
    labels = np.empty(n, dtype=np.int64)
    labels[order] = sorted_labels
    return labels


def single_linkage_threshold(values: np.ndarray, threshold: float) -> np.ndarray:
    """Groups obtained by merging every sorted-neighbor gap at most ``threshold``."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    gaps = np.diff(values[order])
    sorted_labels = np.concatenate([[0], np.cumsum(gaps > threshold)])
    labels = np.empty(len(values), dtype=np.int64)
    labels[order] = sorted_labels
    return labels


def merge_gaps(values: np.ndarray) -> np.ndarray:
    """Gap scales at which the 1D single-linkage filtration merges, ascending."""
    values = np.sort(np.asarray(values, dtype=np.float64))
    return np.sort(np.diff(values))
