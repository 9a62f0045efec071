import math
import tempfile
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lapshape import (AmbiguityError, InvalidInputError, clustering_balance, estimate_spacing, fv_distance, kernels,
                      recluster_by_type, tau_for_segment_count)
from lapshape import io
from lapshape.geometry import radius_neighbors
from lapshape.segmentation import persistence_pairs, segment_field

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
clouds = st.integers(5, 40).flatmap(lambda n: arrays(np.float64, (n, 3), elements=finite))
SETTINGS = settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@SETTINGS
@given(clouds, st.floats(0.1, 2e3), st.data())
def test_radius_matches_linear_scan(pts, r, data):
    center = data.draw(st.integers(0, len(pts) - 1))
    d = np.linalg.norm(pts - pts[center], axis=1)
    expected = sorted((d[j], j) for j in range(len(pts)) if j != center and d[j] <= r)
    assert radius_neighbors(pts, center, r).tolist() == [j for _, j in expected]


lattice_clouds = st.integers(5, 40).flatmap(
    lambda n: arrays(np.int64, (n, 3), elements=st.integers(-4000, 4000), unique=True)).map(lambda a: a / 4.0)


@SETTINGS
@given(lattice_clouds, st.floats(1e-3, 1e3), arrays(np.float64, 3, elements=finite))
def test_spacing_scales_and_ignores_shifts(pts, scale, shift):
    h = estimate_spacing(pts)
    assert estimate_spacing(pts * scale) == pytest.approx(h * scale, rel=1e-9)
    assert estimate_spacing(pts + shift) == pytest.approx(h, rel=1e-6, abs=1e-9)


def circumcircle(a, b, c):
    ax, ay = a
    bx, by = b
    cx, cy = c
    d = 2 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    ux = ((ax * ax + ay * ay) * (by - cy) + (bx * bx + by * by) * (cy - ay) + (cx * cx + cy * cy) * (ay - by)) / d
    uy = ((ax * ax + ay * ay) * (cx - bx) + (bx * bx + by * by) * (ax - cx) + (cx * cx + cy * cy) * (bx - ax)) / d
    return np.array([ux, uy]), math.hypot(ax - ux, ay - uy)


plane_sets = st.integers(4, 25).flatmap(
    lambda n: st.lists(st.tuples(st.integers(-10000, 10000), st.integers(-10000, 10000)),
                       min_size=n, max_size=n, unique=True)).map(lambda a: np.array(a) / 1000.0)


@pytest.mark.parametrize("name", ["python", "compiled"])
@SETTINGS
@given(xy=plane_sets)
def test_delaunay_empty_circumcircles(name, xy):
    if name == "compiled" and kernels._compiled is None:
        pytest.skip("compiled kernels not built")
    xy = np.ascontiguousarray(xy)
    tris, status = kernels.get_backend(name).triangulate(xy, np.arange(len(xy), dtype=np.int64), 1e-9)
    if status != kernels.STATUS_OK:
        return
    tris = np.asarray(tris)
    scale = np.abs(xy).max() + 1
    for t in tris:
        a, b, c = xy[t]
        assert (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]) > 0
        center, rad = circumcircle(a, b, c)
        others = np.delete(np.arange(len(xy)), t)
        if len(others) and rad < 1e6 * scale:
            assert np.linalg.norm(xy[others] - center, axis=1).min() >= rad * (1 - 1e-7) - 1e-9


# -- persistence -----------------------------------------------------------

def path_graph(n):
    rows = [[j for j in (i - 1, i + 1) if 0 <= j < n] for i in range(n)]
    indptr = np.cumsum([0] + [len(r) for r in rows])
    return indptr, np.array([j for r in rows for j in r], dtype=np.int64)


fields = st.integers(3, 40).flatmap(lambda n: st.permutations(list(range(n))))


@SETTINGS
@given(fields, st.lists(st.floats(0, 50), min_size=2, max_size=6))
def test_segment_count_non_increasing_in_tau(field, taus):
    values = np.array(field, dtype=float)
    indptr, indices = path_graph(len(values))
    counts = [segment_field(values, indptr, indices, tau)[0].segment_count for tau in sorted(taus)]
    assert counts == sorted(counts, reverse=True)


@SETTINGS
@given(fields)
def test_tau_closed_loop(field):
    values = np.array(field, dtype=float)
    indptr, indices = path_graph(len(values))
    pairs = persistence_pairs(values, indptr, indices)
    for s in range(1, len(pairs) + 1):
        try:
            tau = tau_for_segment_count(pairs, s)
        except AmbiguityError:
            continue
        assert segment_field(values, indptr, indices, tau)[0].segment_count == s


@SETTINGS
@given(fields, st.floats(0.1, 10), st.floats(-100, 100))
def test_pairs_invariant_under_increasing_maps(field, a, b):
    values = np.array(field, dtype=float)
    indptr, indices = path_graph(len(values))
    key = lambda pairs: sorted((q.birth_point, q.death_point) for q in pairs)  # noqa: E731
    base = key(persistence_pairs(values, indptr, indices))
    assert key(persistence_pairs(a * values + b, indptr, indices)) == base
    assert key(persistence_pairs(np.exp(values / len(values)), indptr, indices)) == base


@SETTINGS
@given(fields)
def test_pair_lifespans_consistent(field):
    values = np.array(field, dtype=float)
    indptr, indices = path_graph(len(values))
    pairs = persistence_pairs(values, indptr, indices)
    assert sum(q.essential for q in pairs) == 1
    for q in pairs:
        if not q.essential:
            assert q.lifespan == q.birth - q.death >= 0
            assert values[q.birth_point] == q.birth


# -- retrieval and clustering ----------------------------------------------

matrices = st.integers(1, 5).flatmap(
    lambda m: st.tuples(*[arrays(np.float64, (m, m), elements=st.floats(0, 1)) for _ in range(3)]))


@SETTINGS
@given(matrices)
def test_fv_distance_pseudometric(triple):
    x, y, z = triple
    dxy, dyz, dxz = fv_distance(x, y), fv_distance(y, z), fv_distance(x, z)
    assert dxy >= 0 and fv_distance(x, x) == 0
    assert dxy == pytest.approx(fv_distance(y, x), abs=1e-12)
    assert dxz <= dxy + dyz + 1e-9


@SETTINGS
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=12), st.floats(0, 5))
def test_threshold_grouping_matches_gap_oracle(values, threshold):
    v = np.array(values)
    order = np.argsort(v, kind="stable")
    group = np.empty(len(v), dtype=int)
    g = 0
    for a, b in zip(order[:-1], order[1:]):
        group[a] = g
        if v[b] - v[a] > threshold:
            g += 1
    group[order[-1]] = g
    types = recluster_by_type(criterion=v, threshold=threshold).segment_type
    same = types[:, None] == types[None, :]
    assert np.array_equal(same, group[:, None] == group[None, :])


@SETTINGS
@given(st.lists(st.floats(-10, 10), min_size=2, max_size=10, unique=True))
def test_type_count_gives_sorted_intervals(values):
    v = np.array(values)
    for k in range(1, len(v) + 1):
        types = recluster_by_type(criterion=v, type_count=k).segment_type
        assert len(set(types.tolist())) == k
        runs = types[np.argsort(v)]
        assert (np.diff(runs) != 0).sum() == k - 1


@SETTINGS
@given(st.lists(st.floats(-10, 10), min_size=2, max_size=8, unique=True))
def test_balance_scores_match_definition(values):
    v = np.array(values)
    bal = clustering_balance(v)
    for k, score in zip(bal.ks, bal.scores):
        types = recluster_by_type(criterion=v, type_count=int(k)).segment_type
        cents = np.array([v[types == g].mean() for g in range(int(k))])
        brute = ((v - cents[types]) ** 2).sum() + ((cents - v.mean()) ** 2).sum()
        assert score == pytest.approx(brute, rel=1e-9, abs=1e-12)
    assert bal.scores[list(bal.ks).index(bal.argmin)] == bal.scores.min()


# -- file round trips ------------------------------------------------------

any_float = st.floats(allow_nan=False, allow_infinity=False)


@SETTINGS
@given(st.integers(4, 20).flatmap(lambda n: arrays(np.float64, (n, 3), elements=any_float)))
def test_xyz_round_trip(pts):
    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "p.xyz"
        io.write_xyz(path, pts)
        assert io.read_xyz_points(path).tobytes() == pts.tobytes()
        try:
            cloud = io.read_xyz(path)
        except InvalidInputError:
            return
        assert len(np.unique(cloud.points, axis=0)) == cloud.n


@SETTINGS
@given(st.integers(1, 6).flatmap(lambda m: st.tuples(
    arrays(np.float64, m, elements=st.floats(1e-6, 1e6), unique=True),
    arrays(np.float64, (7, m), elements=any_float))))
def test_hks_csv_round_trip(data):
    t, values = data
    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "h.csv"
        io.write_hks_csv(path, t, values)
        t2, v2 = io.read_hks_csv(path)
        assert t2.tobytes() == t.tobytes() and v2.tobytes() == values.tobytes()


@SETTINGS
@given(st.integers(1, 8).flatmap(lambda n: st.tuples(
    arrays(np.float64, (n, n), elements=st.one_of(st.just(0.0), any_float)),
    arrays(np.float64, n, elements=st.floats(1e-9, 1e9)))))
def test_sparse_round_trip(data):
    dense, mass = data
    a = sp.csr_matrix(dense)
    with tempfile.TemporaryDirectory() as d:
        first, second = Path(d) / "a", Path(d) / "b"
        io.write_sparse(first, a, mass)
        b, m2, _ = io.read_sparse(first)
        assert (b != a).nnz == 0 and m2.tobytes() == mass.tobytes()
        io.write_sparse(second, b, m2)
        assert first.read_bytes() == second.read_bytes()
