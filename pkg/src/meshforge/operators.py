"""Per-face differential operators: gradient, mass matrix, Laplacian.

The gradient operator maps per-vertex scalars to the 3D gradient of the
piecewise-linear interpolant over each face (a tangent vector of the face
plane). Stacked over faces it is a sparse (3m, n) matrix G; with the
area mass matrix A the Laplacian assembles as L = G^T A G, which matches
the cotangent Laplacian sparsity and values.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse

from .errors import DegenerateFaceError
from .mesh import Mesh


@dataclass(frozen=True)
class TriangleGradientOperator:
    """Per-face 3x3 gradient blocks and their global sparse stacking."""

    blocks: np.ndarray  # (m, 3, 3); column i is grad of corner i's hat function
    faces: np.ndarray  # (m, 3) vertex indices, for assembly
    n_vertices: int

    @cached_property
    def matrix(self) -> sparse.csr_matrix:
        """(3m, n) sparse operator; rows 3k..3k+2 belong to face k."""
        m = len(self.blocks)
        rows = np.repeat(3 * np.arange(m), 9) + np.tile(np.repeat(np.arange(3), 3), m)
        cols = np.repeat(self.faces, 3, axis=0).reshape(-1)
        data = self.blocks.reshape(-1)
        return sparse.csr_matrix((data, (rows, cols)), shape=(3 * m, self.n_vertices))

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Per-vertex values (n,) or (n, k) -> per-face gradients (m, 3) or (m, 3, k)."""
        values = np.asarray(values, dtype=np.float64)
        corner = values[self.faces]  # (m, 3) or (m, 3, k)
        out = np.einsum("mij,mj...->mi...", self.blocks, corner)
        return out


@dataclass(frozen=True)
class MassMatrix:
    """Diagonal per-row face areas matching the stacked gradient rows."""

    face_areas: np.ndarray  # (m,)

    @cached_property
    def diagonal(self) -> np.ndarray:
        """(3m,) per-face area repeated for the 3 stacked gradient rows."""
        return np.repeat(self.face_areas, 3)

    @cached_property
    def matrix(self) -> sparse.dia_matrix:
        return sparse.diags(self.diagonal)


def face_gradient_operator(mesh: Mesh) -> TriangleGradientOperator:
    """FEM gradient blocks from each triangle's edges and unit normal.

    grad(hat_i) = n x e_opp(i) / (2 area); applied to constant data the
    result is zero, and linear fields are reproduced up to their tangential
    projection.
    """
    p = mesh.corner_positions
    areas = mesh.face_areas
    small = areas <= mesh.area_eps
    if small.any():
        raise DegenerateFaceError(int(np.argmax(small)))
    n = mesh.face_normals
    e0 = p[:, 2] - p[:, 1]  # edge opposite corner 0
    e1 = p[:, 0] - p[:, 2]
    e2 = p[:, 1] - p[:, 0]
    inv2a = 1.0 / (2.0 * areas)[:, None]
    blocks = np.stack(
        [np.cross(n, e0) * inv2a, np.cross(n, e1) * inv2a, np.cross(n, e2) * inv2a],
        axis=2,
    )
    return TriangleGradientOperator(blocks=blocks, faces=mesh.faces, n_vertices=mesh.n_vertices)


def mass_matrix(mesh: Mesh) -> MassMatrix:
    return MassMatrix(face_areas=mesh.face_areas.copy())


def assemble_poisson_system(mesh: Mesh):
    """(L, A, G) with L = G^T A G in CSR form.

    Assembly is deterministic (face-index order), so downstream
    factorizations are reproducible.
    """
    grad = face_gradient_operator(mesh)
    mass = mass_matrix(mesh)
    g = grad.matrix.tocsr()
    laplacian = (g.T @ (mass.matrix @ g)).tocsr()
    laplacian.sum_duplicates()
    return laplacian, mass, grad
