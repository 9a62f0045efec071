import itertools
import math

import numpy as np
import pytest

from conftest import jittered_grid, planar_grid
from lapshape import (DegenerateNeighborhoodError, InsufficientSamplingError, InvalidInputError, PointCloud,
                      detect_sharp_edges, estimate_normals, estimate_spacing, generate_primitive,
                      normalize_to_unit_box)
from lapshape.geometry import (LocalFrame, ball_neighborhoods, build_local_frame, max_normal_angle,
                               radius_neighbors, triangulate_frame)
from lapshape.synthetic import random_rotation


def brute_nn(points):
    d = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2)
    np.fill_diagonal(d, np.inf)
    return d.min(axis=1).mean()


def angle_between(a, b):
    c = abs(float(np.dot(a, b))) / (np.linalg.norm(a) * np.linalg.norm(b))
    return math.degrees(math.acos(min(1.0, c)))


# -- spacing ---------------------------------------------------------------

def test_spacing_unit_grid(grid_cloud):
    assert estimate_spacing(grid_cloud) == 1.0


def test_spacing_scales_with_cloud():
    pts = jittered_grid(12, seed=3)
    s = 2.75
    assert estimate_spacing(pts * s) == pytest.approx(s * estimate_spacing(pts), rel=1e-14)


def test_spacing_matches_brute_force():
    pts = np.random.default_rng(0).uniform(size=(500, 3))
    pts[:, 2] = 0.0
    assert abs(estimate_spacing(pts) - brute_nn(pts)) <= 1e-12


def test_spacing_needs_two_points():
    with pytest.raises(InvalidInputError):
        estimate_spacing(np.zeros((1, 3)))


def test_cloud_drops_duplicates_and_rejects_nan():
    pts = planar_grid(5)
    c = PointCloud(np.vstack([pts, pts[:3]]))
    assert c.n == 25 and c.duplicates_dropped == 3
    bad = pts.copy()
    bad[4, 1] = np.nan
    with pytest.raises(InvalidInputError):
        PointCloud(bad)
    with pytest.raises(InvalidInputError):
        PointCloud(pts[:3])


# -- radius neighbors ------------------------------------------------------

def test_radius_below_nn_is_empty(grid_cloud):
    assert len(radius_neighbors(grid_cloud, 0, 0.5)) == 0


def test_radius_beyond_diagonal_returns_everyone(grid_cloud):
    got = radius_neighbors(grid_cloud, 37, grid_cloud.bbox_diagonal * 1.01)
    assert sorted(got.tolist()) == [i for i in range(100) if i != 37]


def test_radius_order_distance_then_index(grid_cloud):
    got = radius_neighbors(grid_cloud, 55, 1.5).tolist()
    assert got == [45, 54, 56, 65, 44, 46, 64, 66]


def test_radius_matches_linear_scan():
    cloud, _ = generate_primitive("sphere", 1000, seed=4)
    pts = cloud.points
    r = 3 * cloud.spacing_h
    for c in range(0, 1000, 37):
        d = np.linalg.norm(pts - pts[c], axis=1)
        oracle = {i for i in range(1000) if i != c and d[i] <= r}
        assert set(radius_neighbors(cloud, c, r).tolist()) == oracle


def test_ball_neighborhoods_agree_with_single_queries():
    cloud, _ = generate_primitive("cylinder", 600, seed=2)
    r = 2.5 * cloud.spacing_h
    indptr, indices = ball_neighborhoods(cloud, r, include_self=False)
    for i in range(0, 600, 29):
        assert sorted(indices[indptr[i]:indptr[i + 1]].tolist()) == sorted(radius_neighbors(cloud, i, r).tolist())


# -- frames ----------------------------------------------------------------

def test_planar_frame():
    rng = np.random.default_rng(5)
    pts = jittered_grid(8, seed=5)
    rot = random_rotation(11)
    pts = pts @ rot.T + rng.normal(size=3)
    frame = build_local_frame(pts, 27, 2.5)
    plane_normal = rot[:, 2]
    assert abs(np.dot(frame.normal, plane_normal)) == pytest.approx(1.0, abs=1e-10)
    assert frame.eigenvalues[2] <= 1e-20
    assert np.all(np.diff(frame.eigenvalues) <= 0)
    assert np.allclose(frame.origin, pts[frame.neighbor_indices].mean(axis=0))


def test_frame_projection_rotation_invariant():
    cloud, _ = generate_primitive("sphere", 800, seed=6)
    pts = cloud.points
    r = 3 * cloud.spacing_h
    rot = random_rotation(2)
    a = build_local_frame(pts, 100, r)
    b = build_local_frame(pts @ rot.T, 100, r)
    assert np.array_equal(a.neighbor_indices, b.neighbor_indices)

    def pairwise(p):
        return np.linalg.norm(p[:, None] - p[None, :], axis=2)

    assert np.allclose(pairwise(a.projected), pairwise(b.projected), atol=1e-10)


def test_projection_is_contraction():
    cloud, _ = generate_primitive("cube-surface", 900, seed=1)
    pts = cloud.points
    r = 3 * cloud.spacing_h
    for c in (0, 123, 456, 789):
        f = build_local_frame(cloud, c, r)
        d3 = np.linalg.norm(pts[f.neighbor_indices][:, None] - pts[f.neighbor_indices][None], axis=2)
        d2 = np.linalg.norm(f.projected[:, None] - f.projected[None], axis=2)
        assert np.all(d2 <= d3 + 1e-12)


def test_noisy_sphere_patch_normal():
    rng = np.random.default_rng(9)
    v = rng.normal(size=(20000, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    patch = v[v[:, 2] > 0.9]
    cloud = PointCloud(patch)
    h = cloud.spacing_h
    noisy = patch + rng.normal(scale=0.1 * h, size=patch.shape)
    c = int(np.argmax(patch[:, 2]))
    frame = build_local_frame(noisy, c, 4 * h)
    assert angle_between(frame.normal, patch[c]) < 5.0


def test_frame_too_few_neighbors():
    with pytest.raises(InsufficientSamplingError) as err:
        build_local_frame(planar_grid(4), 0, 0.5)
    assert err.value.point_ids == [0]


def test_frame_collinear():
    line = np.column_stack([np.arange(6.0), np.zeros(6), np.zeros(6)])
    with pytest.raises(DegenerateNeighborhoodError):
        build_local_frame(line, 2, 2.5)


# -- local Delaunay --------------------------------------------------------

def frame_of(xy):
    xy = np.asarray(xy, dtype=np.float64)
    m = len(xy)
    return LocalFrame(0, np.arange(m), np.zeros(3), np.eye(3), np.ones(3), xy, 1.0)


def test_single_triangle():
    tri = triangulate_frame(frame_of([[0, 0], [2, 0], [0, 1]]))
    assert len(tri.triangles) == 1
    assert tri.triangle_areas[0] == pytest.approx(1.0)
    assert np.allclose(tri.areas, 1.0)


def test_unit_square():
    tri = triangulate_frame(frame_of([[0, 0], [1, 0], [1, 1], [0, 1]]))
    assert len(tri.triangles) == 2
    assert tri.triangle_areas.sum() == pytest.approx(1.0, abs=1e-15)


def test_square_tie_break_is_deterministic():
    first = triangulate_frame(frame_of([[0, 0], [1, 0], [1, 1], [0, 1]])).triangles
    for _ in range(3):
        assert np.array_equal(triangulate_frame(frame_of([[0, 0], [1, 0], [1, 1], [0, 1]])).triangles, first)


def circumcircle_empty(xy, tris, tol=1e-9):
    for t in tris:
        a, b, c = xy[t]
        m = np.array([[b[0] - a[0], b[1] - a[1]], [c[0] - a[0], c[1] - a[1]]])
        rhs = 0.5 * np.array([b @ b - a @ a, c @ c - a @ a])
        center = np.linalg.solve(m, rhs)
        rad = np.linalg.norm(a - center)
        others = np.setdiff1d(np.arange(len(xy)), t)
        if np.any(np.linalg.norm(xy[others] - center, axis=1) < rad * (1 - tol)):
            return False
    return True


@pytest.mark.parametrize("seed", range(5))
def test_delaunay_matches_circumcircle_oracle(seed):
    xy = np.random.default_rng(seed).uniform(size=(30, 2))
    tri = triangulate_frame(frame_of(xy))
    assert circumcircle_empty(xy, tri.triangles)
    # a triangulation of points in general position has 2n - 2 - hull triangles
    from scipy.spatial import ConvexHull
    hull = len(ConvexHull(xy).vertices)
    assert len(tri.triangles) == 2 * 30 - 2 - hull


def test_delaunay_matches_all_triples_enumeration():
    xy = np.random.default_rng(42).uniform(size=(12, 2))
    tri = triangulate_frame(frame_of(xy))
    oracle = set()
    for t in itertools.combinations(range(12), 3):
        a, b, c = xy[list(t)]
        if abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])) < 1e-14:
            continue
        if circumcircle_empty(xy, [list(t)]):
            oracle.add(t)
    assert {tuple(sorted(t)) for t in tri.triangles.tolist()} == oracle


def test_vertex_area_is_three_times_triangle_total():
    xy = np.random.default_rng(8).uniform(size=(25, 2))
    tri = triangulate_frame(frame_of(xy))
    assert tri.areas.sum() == pytest.approx(3 * tri.triangle_areas.sum(), rel=1e-10)
    assert np.all(tri.triangle_areas > 0)


def test_vertex_area_sums_incident_triangles():
    xy = np.random.default_rng(3).uniform(size=(20, 2))
    tri = triangulate_frame(frame_of(xy))
    for v in range(20):
        incident = [a for t, a in zip(tri.triangles, tri.triangle_areas) if v in t]
        assert tri.vertex_area[v] == pytest.approx(sum(incident), rel=1e-12)


def test_collinear_frame_rejected():
    with pytest.raises(DegenerateNeighborhoodError):
        triangulate_frame(frame_of([[0, 0], [1, 1], [2, 2], [3, 3]]))


# -- normals and edges -----------------------------------------------------

def test_grid_normals_parallel(grid_cloud):
    normals = estimate_normals(grid_cloud, 1.5)
    assert np.all(np.abs(normals[:, 2]) >= 1 - 1e-8)


def test_sphere_normals():
    cloud, _ = generate_primitive("sphere", 2000, seed=0, even=True)
    normals = estimate_normals(cloud, 3 * cloud.spacing_h)
    errs = [angle_between(nv, p) for nv, p in zip(normals, cloud.points)]
    assert np.median(errs) < 3.0


def test_normals_rotate_with_cloud():
    cloud, _ = generate_primitive("cube-surface", 1000, seed=3, even=True)
    r = 3 * cloud.spacing_h
    rot = random_rotation(5)
    a = estimate_normals(cloud, r) @ rot.T
    b = estimate_normals(cloud.points @ rot.T, r)
    dots = np.abs((a * b).sum(axis=1))
    assert np.all(dots >= 1 - 1e-8)


def test_normals_collect_all_failures():
    pts = np.vstack([planar_grid(6), [[50.0, 50, 0], [-50.0, 0, 0]]])
    with pytest.raises(InsufficientSamplingError) as err:
        estimate_normals(pts, 1.5)
    assert err.value.point_ids == [36, 37]


def test_grid_has_no_edges(grid_cloud):
    normals = estimate_normals(grid_cloud, 1.5)
    for thr in (1e-6, 0.1, 1.0):
        assert len(detect_sharp_edges(grid_cloud, normals, 1.5, thr)) == 0


def crease(step=0.05):
    a = np.arange(0, 1 + 1e-9, step)
    u, v = np.meshgrid(a, a, indexing="ij")
    floor = np.column_stack([u.ravel(), v.ravel(), np.zeros(u.size)])
    wall = np.column_stack([np.zeros(u.size), v.ravel(), u.ravel()])
    wall = wall[wall[:, 2] > 0]
    return np.vstack([floor, wall])


def test_crease_edges_hug_the_crease():
    pts = crease()
    r = 3 * 0.05
    normals = estimate_normals(pts, r)
    flagged = detect_sharp_edges(pts, normals, r, math.radians(30))
    assert len(flagged) > 0
    dist = np.hypot(pts[flagged, 0], pts[flagged, 2])
    assert dist.max() <= r


def test_zero_threshold_flags_noisy_points():
    rng = np.random.default_rng(1)
    pts = planar_grid(10)
    pts[:, 2] = rng.normal(scale=1e-3, size=100)
    normals = estimate_normals(pts, 1.5)
    assert len(detect_sharp_edges(pts, normals, 1.5, 0.0)) == 100


def test_angle_folds_sign():
    pts = planar_grid(5)
    normals = np.tile([0.0, 0.0, 1.0], (25, 1))
    normals[::2] *= -1
    assert np.all(max_normal_angle(pts, normals, 1.5) == 0.0)


# -- unit box --------------------------------------------------------------

def test_unit_box_identity():
    pts = np.random.default_rng(0).uniform(size=(50, 3))
    pts[0] = 0.0
    pts[1] = [1.0, 0.5, 0.5]
    out, tf = normalize_to_unit_box(pts)
    assert tf.scale == 1.0 and np.all(tf.translation == 0.0)
    assert np.array_equal(out.points, pts)


def test_unit_box_extent_and_aspect():
    pts = np.random.default_rng(1).normal(size=(200, 3)) * [5.0, 2.0, 0.3] + [10, -3, 7]
    out, tf = normalize_to_unit_box(pts)
    ext_in = pts.max(axis=0) - pts.min(axis=0)
    ext_out = out.points.max(axis=0) - out.points.min(axis=0)
    assert abs(ext_out.max() - 1.0) <= 1e-12
    assert np.allclose(ext_out / ext_out.max(), ext_in / ext_in.max(), rtol=1e-12)
    assert np.allclose(out.points.min(axis=0), 0.0, atol=1e-15)


def test_unit_box_rejects_coincident():
    with pytest.raises(InvalidInputError):
        normalize_to_unit_box(np.ones((5, 3)))
