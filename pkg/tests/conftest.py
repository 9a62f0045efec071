from __future__ import annotations

import numpy as np
import pytest

from lapshape import PointCloud, assemble_spcl, generate_primitive, solve_eigs

_acceptance_lines: list[str] = []


def report(criterion: int, ok: bool, detail: str) -> None:
    """Record and print one acceptance verdict line."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
    _acceptance_lines.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


def planar_grid(side: int = 10, spacing: float = 1.0) -> np.ndarray:
    xs, ys = np.meshgrid(np.arange(side) * spacing, np.arange(side) * spacing, indexing="ij")
    return np.column_stack([xs.ravel(), ys.ravel(), np.zeros(side * side)])


def jittered_grid(side: int, seed: int, amount: float = 0.2) -> np.ndarray:
    rng = np.random.default_rng(seed)
    g = planar_grid(side)
    g[:, :2] += rng.uniform(-amount, amount, size=(len(g), 2))
    return g


@pytest.fixture(scope="session")
def sphere_model():
    cloud, _ = generate_primitive("sphere", 1200, seed=1)
    op = assemble_spcl(cloud)
    eigs = solve_eigs(op, 40)
    return cloud, op, eigs


@pytest.fixture(scope="session")
def fused_model():
    cloud, labels = generate_primitive("fused-spheres", 3000, seed=0)
    op = assemble_spcl(cloud)
    eigs = solve_eigs(op, 100)
    return cloud, labels, op, eigs


@pytest.fixture
def grid_cloud():
    return PointCloud(planar_grid(10))
