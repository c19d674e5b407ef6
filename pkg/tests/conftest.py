import numpy as np
import pytest

from meshforge import shapes
from meshforge.mesh import Mesh


@pytest.fixture(scope="session")
def fixture_meshes():
    return {
        "triangle": shapes.triangle(),
        "tetrahedron": shapes.tetrahedron(),
        "cube": shapes.cube(),
        "icosphere": shapes.icosphere(2),
        "blob": shapes.blob(),
    }


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def random_mesh(rng, max_vertices=200):
    """Random valid triangle soup: a jittered low-subdivision icosphere."""
    sub = int(rng.integers(0, 3))
    base = shapes.icosphere(sub)
    if base.n_vertices > max_vertices:
        base = shapes.icosphere(1)
    jitter = rng.normal(0.0, 0.03, size=base.vertices.shape)
    return Mesh(base.vertices + jitter, base.faces)
