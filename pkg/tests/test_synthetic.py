import math

import numpy as np
import pytest
from scipy.spatial import cKDTree

from lapshape import InvalidInputError, NoiseSpec, PointCloud, add_noise, generate_primitive
from lapshape.synthetic import PRIMITIVE_KINDS, distance_to_segments, house_edges, random_rotation


def test_sphere_on_unit_radius():
    cloud, labels = generate_primitive("sphere", 2000, seed=3)
    assert labels is None
    assert np.abs(np.linalg.norm(cloud.points, axis=1) - 1).max() <= 1e-12


def test_cube_faces_balanced():
    n = 6000
    cloud, face = generate_primitive("cube-surface", n, seed=1)
    counts = np.bincount(face, minlength=6)
    sd = math.sqrt(n * (1 / 6) * (5 / 6))
    assert np.all(np.abs(counts - n / 6) <= 3 * sd)
    pts = cloud.points
    for f in range(6):
        ax, side = divmod(f, 2)
        assert np.all(pts[face == f, ax] == side)
    assert pts.min() >= 0 and pts.max() <= 1


@pytest.mark.parametrize("even", [False, True])
def test_twin_cylinders_gap(even):
    cloud, labels = generate_primitive("twin-cylinders", 1200, seed=2, gap=4.0, even=even)
    a, b = cloud.points[labels == 0], cloud.points[labels == 1]
    d, _ = cKDTree(b).query(a)
    assert d.min() >= 4.0 * cloud.spacing_h


@pytest.mark.parametrize("kind", PRIMITIVE_KINDS)
def test_same_seed_same_cloud(kind):
    a, la = generate_primitive(kind, 300, seed=7)
    b, lb = generate_primitive(kind, 300, seed=7)
    assert a.points.tobytes() == b.points.tobytes()
    assert (la is None and lb is None) or np.array_equal(la, lb)
    assert a.n == 300
    c, _ = generate_primitive(kind, 300, seed=8)
    assert c.points.tobytes() != a.points.tobytes()


def test_generator_argument_errors():
    with pytest.raises(InvalidInputError):
        generate_primitive("sphere", 99)
    with pytest.raises(InvalidInputError, match="torus"):
        generate_primitive("torus", 500)


def test_house_edges_are_creases():
    cloud, _ = generate_primitive("house", 3000, seed=0)
    d = distance_to_segments(cloud.points, house_edges())
    assert d.min() < cloud.spacing_h


def test_random_rotation_proper():
    for seed in range(5):
        q = random_rotation(seed)
        assert np.allclose(q @ q.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(q) == pytest.approx(1.0)


# -- noise -----------------------------------------------------------------

def test_zero_noise_is_identity():
    cloud, _ = generate_primitive("sphere", 500, seed=0)
    out = add_noise(cloud, NoiseSpec(0.0, 0.0, 4))
    assert out.points.tobytes() == cloud.points.tobytes()


def test_noise_std_matches_spacing():
    cloud, _ = generate_primitive("sphere", 10000, seed=0)
    h = cloud.spacing_h
    out = add_noise(cloud, NoiseSpec(0.0, 0.5, 1))
    disp = out.points - cloud.points
    assert abs(disp.std() - 0.5 * h) <= 0.03 * 0.5 * h
    assert abs(disp.mean()) <= 3 * 0.5 * h / math.sqrt(disp.size)


def test_noise_with_mean_offset():
    cloud, _ = generate_primitive("sphere", 4000, seed=0)
    h = cloud.spacing_h
    spec = NoiseSpec(mu=h / 2, sigma_p=0.125, seed=2)
    assert (spec.mu, spec.sigma_p) == (h / 2, 0.125)
    disp = add_noise(cloud, spec).points - cloud.points
    sd = 0.125 * h
    assert abs(disp.mean() - h / 2) <= 4 * sd / math.sqrt(disp.size)
    assert abs(disp.std() - sd) <= 0.03 * sd


def test_noise_uses_frozen_spacing():
    cloud, _ = generate_primitive("sphere", 1000, seed=0)
    once = add_noise(cloud, NoiseSpec(0.0, 0.5, 1), spacing=0.01)
    ref = add_noise(PointCloud(cloud.points), NoiseSpec(0.0, 0.5 * 0.01 / cloud.spacing_h, 1))
    assert np.allclose(once.points, ref.points, rtol=0, atol=1e-15)


def test_negative_sigma_rejected():
    with pytest.raises(InvalidInputError):
        NoiseSpec(0.0, -0.1, 0)
    with pytest.raises(InvalidInputError):
        NoiseSpec(0.0, math.nan, 0)
