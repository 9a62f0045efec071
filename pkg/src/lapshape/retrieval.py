"""Descriptor distance, model indexing and top-k retrieval."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .config import RunConfig, canonical_json, fingerprint
from .errors import IncompatibleParametersError, InvalidInputError, LapshapeError, PipelineError
from .geometry import CloudLike, PointCloud, as_points, normalize_to_unit_box
from .laplacian import assemble_spcl, resolve_radius, solve_eigs
from .segmentation import (nu_graph, persistence_pairs, persistence_segment, remove_small_segments, segment_field,
                           tau_for_segment_count)
from .signatures import FeatureVector, build_feature_vector, compute_hks, default_t_scales

INDEX_HEADER = "lapshape-index v1"


def fv_distance(a: FeatureVector | np.ndarray, b: FeatureVector | np.ndarray, matching: str = "hungarian") -> float:
    """Distance between two feature matrices that ignores row order.

    ``hungarian`` matches rows one-to-one minimizing the summed row-to-row L2
    distance.  ``sorted`` sorts each matrix's rows lexicographically and
    returns the Frobenius norm of the difference.
    """
    x = a.rows if isinstance(a, FeatureVector) else np.asarray(a, dtype=np.float64)
    y = b.rows if isinstance(b, FeatureVector) else np.asarray(b, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 2:
        raise InvalidInputError(f"feature vectors differ in shape: {x.shape} vs {y.shape}")
    if matching == "hungarian":
        cost = np.sqrt(((x[:, None, :] - y[None, :, :]) ** 2).sum(axis=2))
        ri, ci = linear_sum_assignment(cost)
        return float(cost[ri, ci].sum())
    if matching == "sorted":
        xs = x[np.lexsort(x.T[::-1])]
        ys = y[np.lexsort(y.T[::-1])]
        return float(np.linalg.norm(xs - ys))
    raise InvalidInputError(f"unknown matching {matching!r}")


@dataclass(frozen=True)
class DescriptorRecord:
    model_id: str
    feature_vector: FeatureVector
    params: dict
    source_hash: str = ""
    info: dict = field(default_factory=dict, compare=False)

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.params)

    def to_json(self) -> str:
        fv = self.feature_vector
        return canonical_json({
            "model_id": self.model_id,
            "params": self.params,
            "source_hash": self.source_hash,
            "m": int(fv.m),
            "rows": [float(v) for v in fv.rows.ravel()],
            "feature_point_ids": [int(i) for i in fv.feature_point_ids],
            "normalization": float(fv.normalization),
        })

    @classmethod
    def from_json(cls, line: str) -> "DescriptorRecord":
        d = json.loads(line)
        m = int(d["m"])
        rows = np.array(d["rows"], dtype=np.float64)
        if rows.size != m * m:
            raise InvalidInputError(f"record {d.get('model_id')!r}: {rows.size} values for m = {m}")
        fv = FeatureVector(rows.reshape(m, m), np.array(d["feature_point_ids"], dtype=np.int64),
                           float(d["normalization"]))
        return cls(str(d["model_id"]), fv, dict(d["params"]), str(d.get("source_hash", "")))


class DescriptorIndex:
    """Records that all share one parameter fingerprint."""

    def __init__(self, params: dict, records: Iterable[DescriptorRecord] = ()):
        self.params = dict(params)
        self.param_fingerprint = fingerprint(self.params)
        self._records: list[DescriptorRecord] = []
        for rec in records:
            self.add(rec)

    @property
    def records(self) -> tuple[DescriptorRecord, ...]:
        return tuple(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def add(self, record: DescriptorRecord) -> None:
        self._check(record)
        if any(r.model_id == record.model_id for r in self._records):
            raise InvalidInputError(f"duplicate model id {record.model_id!r}")
        self._records.append(record)

    def _check(self, record: DescriptorRecord) -> None:
        if record.fingerprint != self.param_fingerprint:
            raise IncompatibleParametersError(
                f"record {record.model_id!r} was built with different parameters "
                f"({record.fingerprint[:12]} vs index {self.param_fingerprint[:12]})")

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8", newline="\n")

    def dumps(self) -> str:
        lines = [INDEX_HEADER, canonical_json({"param_fingerprint": self.param_fingerprint, "params": self.params})]
        lines += [r.to_json() for r in self._records]
        return "\n".join(lines) + "\n"

    @classmethod
    def read(cls, path: str | Path) -> "DescriptorIndex":
        return cls.loads(Path(path).read_text(encoding="utf-8"))

    @classmethod
    def loads(cls, text: str) -> "DescriptorIndex":
        lines = [ln for ln in text.split("\n") if ln.strip()]
        if not lines or lines[0].strip() != INDEX_HEADER:
            raise InvalidInputError(f"not an index file (expected header {INDEX_HEADER!r})")
        if len(lines) < 2:
            raise InvalidInputError("index file has no parameter line")
        meta = json.loads(lines[1])
        index = cls(meta["params"])
        if index.param_fingerprint != meta.get("param_fingerprint"):
            raise InvalidInputError("index parameter fingerprint does not match its parameters")
        for no, line in enumerate(lines[2:], start=3):
            try:
                index.add(DescriptorRecord.from_json(line))
            except (KeyError, ValueError, TypeError) as exc:
                if isinstance(exc, LapshapeError):
                    raise
                raise InvalidInputError(f"index line {no}: {exc}") from exc
        return index


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except LapshapeError as exc:
        if isinstance(exc, PipelineError):
            raise
        raise PipelineError(name, exc) from exc


def _outlier_cull(cloud: PointCloud, config: RunConfig, backend: str | None):
    """Drop neighbor-graph components holding less than the cull fraction of the points."""
    r, eps = resolve_radius(cloud, config.radius_multiplier)
    op = assemble_spcl(cloud, r, eps, backend=backend)
    comp_seg, _ = persistence_segment(cloud, op, np.zeros(op.n), nu=config.nu, tau=np.inf)
    if comp_seg.segment_count == 1 or config.cull_fraction == 0:
        return cloud, op, np.zeros(0, dtype=np.int64)
    _, culled = remove_small_segments(comp_seg, config.cull_fraction)
    if len(culled) == 0:
        return cloud, op, culled
    keep = np.setdiff1d(np.arange(cloud.n), culled)
    trimmed = PointCloud(cloud.points[keep])
    r, eps = resolve_radius(trimmed, config.radius_multiplier)
    return trimmed, assemble_spcl(trimmed, r, eps, backend=backend), culled


def index_model(cloud: CloudLike, config: RunConfig | None = None, model_id: str = "",
                source_hash: str = "", backend: str | None = None) -> DescriptorRecord:
    """Descriptor of one model.

    Normalizes to the unit box, culls small disconnected fragments, builds the
    operator and its spectrum, and splits the signature into ``scale_count``
    segments by persistence.  The segmented scale is the coarsest one, up to
    the median, whose field has at least ``scale_count`` peaks.
    Errors are re-raised as :class:`PipelineError` naming the failing stage.
    """
    config = config or RunConfig()
    m = config.scale_count
    base = cloud if isinstance(cloud, PointCloud) else _stage("load", PointCloud, as_points(cloud))
    normed, _ = _stage("normalize", normalize_to_unit_box, base)
    normed, op, culled = _stage("assemble", _outlier_cull, normed, config, backend)
    k = min(config.eig_count, op.n - 1)
    eigs = _stage("eigensolve", solve_eigs, op, k, seed=config.seed)
    scales = _stage("signature", default_t_scales, eigs, m)
    hks = compute_hks(eigs, scales)
    indptr, indices = nu_graph(op, config.nu)

    def segment():
        # coarsest scale up to the median that still has m peaks
        for j in range(m // 2, -1, -1):
            ref = float(scales[j])
            column = hks.values[:, j]
            pairs = persistence_pairs(column, indptr, indices)
            if len(pairs) >= m:
                break
        else:
            raise InvalidInputError(f"signature field has only {len(pairs)} peaks; {m} segments requested")
        tau = tau_for_segment_count(pairs, m)
        seg, _ = segment_field(column, indptr, indices, tau, ref, {"nu": int(config.nu), "tau": float(tau)})
        return seg, tau

    seg, tau = _stage("segment", segment)
    fv = _stage("feature", build_feature_vector, hks, seg, m)
    info = {"n": int(op.n), "culled": int(len(culled)), "tau": float(tau), "radius": float(op.radius_r),
            "eig_count": int(k), "labels": seg.labels}
    return DescriptorRecord(model_id, fv, config.descriptor_params(), source_hash, info)


def retrieve_top_k(index: DescriptorIndex, query: DescriptorRecord, k: int,
                   matching: str = "hungarian") -> list[tuple[str, float]]:
    """The ``k`` closest records by ascending distance, ties by model id."""
    index._check(query)
    if not 1 <= k <= len(index):
        raise InvalidInputError(f"k must be in [1, {len(index)}], got {k}")
    scored = [(fv_distance(query.feature_vector, r.feature_vector, matching), r.model_id) for r in index.records]
    scored.sort()
    return [(mid, score) for score, mid in scored[:k]]


def top_k_hit_rate(index: DescriptorIndex, queries: Sequence[DescriptorRecord], classes: dict[str, str], k: int,
                   matching: str = "hungarian") -> float:
    """Share of queries whose top ``k`` (self excluded) contains a model of the same class.

    ``classes`` maps every model id, indexed or queried, to its class label.
    """
    if not queries:
        raise InvalidInputError("no queries")
    hits = 0
    for q in queries:
        if q.model_id not in classes:
            raise InvalidInputError(f"query {q.model_id!r} has no class label")
        ranked = retrieve_top_k(index, q, len(index), matching)
        others = [mid for mid, _ in ranked if mid != q.model_id][:k]
        hits += any(classes.get(mid) == classes[q.model_id] for mid in others)
    return hits / len(queries)
