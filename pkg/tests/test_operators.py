import numpy as np
import pytest

from meshforge import shapes
from meshforge.errors import DegenerateFaceError
from meshforge.mesh import Mesh
from meshforge.operators import assemble_poisson_system, face_gradient_operator, mass_matrix


def dense_gradient_oracle(mesh):
    """Independent dense FEM gradient: per face solve [e1; e2; n] g = rhs.

    The gradient g of the linear interpolant satisfies g . e1 = f1 - f0,
    g . e2 = f2 - f0, g . n = 0; solving that 3x3 system per corner hat
    function gives the dense (3m, n) operator without cross products.
    """
    m, n = mesh.n_faces, mesh.n_vertices
    out = np.zeros((3 * m, n))
    for k, (i0, i1, i2) in enumerate(mesh.faces):
        p0, p1, p2 = mesh.vertices[[i0, i1, i2]]
        normal = np.cross(p1 - p0, p2 - p0)
        normal /= np.linalg.norm(normal)
        lhs = np.stack([p1 - p0, p2 - p0, normal])
        for corner, col in enumerate((i0, i1, i2)):
            f = np.zeros(3)
            f[corner] = 1.0
            rhs = np.array([f[1] - f[0], f[2] - f[0], 0.0])
            out[3 * k : 3 * k + 3, col] += np.linalg.solve(lhs, rhs)
    return out


def test_right_triangle_linear_field():
    mesh = shapes.triangle()
    grad = face_gradient_operator(mesh)
    g = grad.apply(mesh.vertices[:, 0])  # f(x, y) = x
    assert np.allclose(g, [[1.0, 0.0, 0.0]], atol=1e-12)


def test_constant_field_annihilated(fixture_meshes):
    for mesh in fixture_meshes.values():
        grad = face_gradient_operator(mesh)
        g = grad.apply(np.full(mesh.n_vertices, 7.0))
        assert np.abs(g).max() < 1e-10


def test_icosahedron_linear_field_vs_dense_oracle(rng):
    mesh = shapes.icosahedron()
    grad = face_gradient_operator(mesh)
    dense = dense_gradient_oracle(mesh)
    a = rng.standard_normal(3)
    values = mesh.vertices @ a
    ours = grad.apply(values)
    oracle = (dense @ values).reshape(-1, 3)
    assert np.abs(ours - oracle).max() < 1e-10 * max(1.0, np.abs(oracle).max())
    # tangential projection of the generator is reproduced exactly
    expected = a - mesh.face_normals * (mesh.face_normals @ a)[:, None]
    assert np.abs(ours - expected).max() < 1e-10


def test_gradient_matrix_matches_blocks(rng):
    mesh = shapes.icosphere(1)
    grad = face_gradient_operator(mesh)
    values = rng.standard_normal(mesh.n_vertices)
    via_matrix = (grad.matrix @ values).reshape(-1, 3)
    assert np.allclose(via_matrix, grad.apply(values), atol=1e-14)


def test_mass_matrix_entries(fixture_meshes):
    for mesh in fixture_meshes.values():
        mass = mass_matrix(mesh)
        assert (mass.diagonal > 0).all()
        assert np.isclose(mass.face_areas.sum(), mesh.surface_area)
        assert np.allclose(np.repeat(mass.face_areas, 3), mass.diagonal)


def test_laplacian_invariants(fixture_meshes):
    for name, mesh in fixture_meshes.items():
        laplacian, _, _ = assemble_poisson_system(mesh)
        dense = laplacian.toarray()
        assert np.abs(dense - dense.T).max() < 1e-12, name
        assert np.abs(dense.sum(axis=1)).max() < 1e-10, name


def test_laplacian_psd(rng, fixture_meshes):
    for mesh in (fixture_meshes["cube"], fixture_meshes["icosphere"]):
        laplacian, _, _ = assemble_poisson_system(mesh)
        for _ in range(20):
            x = rng.standard_normal(mesh.n_vertices)
            x /= np.linalg.norm(x)
            assert x @ (laplacian @ x) >= -1e-10


def test_tetrahedron_laplacian_vs_dense_assembly():
    mesh = shapes.tetrahedron()
    laplacian, mass, _ = assemble_poisson_system(mesh)
    dense_g = dense_gradient_oracle(mesh)
    dense_a = np.diag(np.repeat(mesh.face_areas, 3))
    oracle = dense_g.T @ dense_a @ dense_g
    assert np.abs(laplacian.toarray() - oracle).max() < 1e-12


def test_single_equilateral_triangle_rows_sum_zero():
    v = np.array([[0, 0, 0], [1, 0, 0], [0.5, np.sqrt(3) / 2, 0]])
    mesh = Mesh(v, [[0, 1, 2]])
    laplacian, _, _ = assemble_poisson_system(mesh)
    assert laplacian.shape == (3, 3)
    assert np.abs(laplacian.toarray().sum(axis=1)).max() < 1e-12


def test_degenerate_face_errors_name_face():
    verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 0, 0]], dtype=float)
    mesh = Mesh(verts, [[0, 1, 2], [0, 1, 3]], validate=False)
    with pytest.raises(DegenerateFaceError) as err:
        face_gradient_operator(mesh)
    assert err.value.face_index == 1
