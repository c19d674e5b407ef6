"""Jacobian-field deformation: Poisson solve and its adjoint.

Vertex positions are recovered from per-face target matrices M_i as the
minimizer of the area-weighted least-squares energy

    E(X) = sum_k A_k || (G X)_k - M_k^T ||_F^2,

whose normal equations are L X = G^T A Mstack with L = G^T A G. L has a
constant nullspace per connected component; the gauge is fixed by pinning
one vertex per component during the solve and then translating each
component so its vertex centroid matches the base mesh.
"""

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import splu

from .errors import FactorizationError, MeshError
from .mesh import Mesh
from .operators import assemble_poisson_system

_BLOB_MAGIC = b"MFJF\x01\x00"


@dataclass(eq=False)
class JacobianField:
    """One learnable 3x3 matrix per face; identity at initialization."""

    matrices: np.ndarray  # (m, 3, 3) float64

    def __post_init__(self):
        self.matrices = np.asarray(self.matrices, dtype=np.float64)
        if self.matrices.ndim != 3 or self.matrices.shape[1:] != (3, 3):
            raise MeshError(f"jacobian field must be (m, 3, 3), got {self.matrices.shape}")

    @classmethod
    def identity(cls, n_faces: int) -> "JacobianField":
        return cls(np.broadcast_to(np.eye(3), (n_faces, 3, 3)).copy())

    @property
    def n_faces(self) -> int:
        return len(self.matrices)

    def copy(self) -> "JacobianField":
        return JacobianField(self.matrices.copy())

    def to_blob(self) -> bytes:
        """Little-endian float64 row-major payload with a face-count header."""
        header = _BLOB_MAGIC + struct.pack("<Q", self.n_faces)
        return header + np.ascontiguousarray(self.matrices, dtype="<f8").tobytes()

    @classmethod
    def from_blob(cls, blob: bytes) -> "JacobianField":
        if blob[: len(_BLOB_MAGIC)] != _BLOB_MAGIC:
            raise ValueError("not a jacobian-field blob")
        (m,) = struct.unpack_from("<Q", blob, len(_BLOB_MAGIC))
        offset = len(_BLOB_MAGIC) + 8
        data = np.frombuffer(blob, dtype="<f8", count=m * 9, offset=offset)
        return cls(data.reshape(m, 3, 3).astype(np.float64))


@dataclass(eq=False)
class PoissonSolver:
    """Prefactored gauge-fixed Poisson system bound to one base mesh.

    The factorization is computed once; every solve afterwards costs two
    triangular solves. Instances are immutable and safe to share across
    threads.
    """

    mesh: Mesh
    laplacian: object
    grad: object
    mass: object
    _lu: object = field(repr=False)
    _keep: np.ndarray = field(repr=False)  # indices of unpinned vertices
    _components: np.ndarray = field(repr=False)
    _base_centroids: np.ndarray = field(repr=False)  # (ncomp, 3)

    @property
    def n_faces(self) -> int:
        return self.mesh.n_faces

    def _check_field(self, jacobians: JacobianField):
        if jacobians.n_faces != self.mesh.n_faces:
            raise MeshError(
                f"jacobian field has {jacobians.n_faces} faces, mesh has {self.mesh.n_faces}"
            )

    def solve_positions(self, jacobians: JacobianField) -> np.ndarray:
        """Least-squares-optimal (n, 3) vertex positions for the target field.

        Each connected component is rigidly translated so its vertex
        centroid matches the base mesh's.
        """
        self._check_field(jacobians)
        rhs_stack = np.transpose(jacobians.matrices, (0, 2, 1)).reshape(-1, 3)
        rhs = self.grad.matrix.T @ (self.mass.diagonal[:, None] * rhs_stack)
        x = np.zeros((self.mesh.n_vertices, 3))
        x[self._keep] = self._lu.solve(rhs[self._keep])
        return self._align(x)

    def _align(self, x: np.ndarray) -> np.ndarray:
        for c in range(len(self._base_centroids)):
            sel = self._components == c
            x[sel] += self._base_centroids[c] - x[sel].mean(axis=0)
        return x

    def solve_adjoint(self, loss_grad_vertices: np.ndarray) -> np.ndarray:
        """d(loss)/d(M) given d(loss)/d(vertices), via one adjoint solve.

        Uses the same factorization; the centroid alignment makes the map
        invariant to per-component constant shifts of the incoming gradient.
        """
        g = np.asarray(loss_grad_vertices, dtype=np.float64)
        if g.shape != (self.mesh.n_vertices, 3):
            raise MeshError(f"gradient must be (n, 3) = ({self.mesh.n_vertices}, 3), got {g.shape}")
        g = g.copy()
        for c in range(len(self._base_centroids)):
            sel = self._components == c
            g[sel] -= g[sel].mean(axis=0)
        y = np.zeros_like(g)
        y[self._keep] = self._lu.solve(g[self._keep])
        stack = self.mass.diagonal[:, None] * (self.grad.matrix @ y)  # (3m, 3)
        return np.transpose(stack.reshape(-1, 3, 3), (0, 2, 1)).copy()


def build_solver(mesh: Mesh) -> PoissonSolver:
    """Assemble and prefactor the gauge-fixed Poisson system for a mesh."""
    laplacian, mass, grad = assemble_poisson_system(mesh)
    components = mesh.vertex_components
    ncomp = mesh.n_components
    pins = np.array([np.argmax(components == c) for c in range(ncomp)], dtype=np.int64)
    keep = np.setdiff1d(np.arange(mesh.n_vertices), pins)
    reduced = laplacian[keep][:, keep].tocsc()
    try:
        lu = splu(reduced, permc_spec="COLAMD")
    except RuntimeError as exc:  # pragma: no cover - scipy reports the pivot
        raise FactorizationError(f"gauge-fixed Laplacian factorization failed: {exc}") from exc
    diag_u = np.abs(lu.U.diagonal())
    if diag_u.size and diag_u.min() <= 1e-14 * max(1.0, diag_u.max()):
        raise FactorizationError(
            f"numerically singular after gauge fix (pivot {int(np.argmin(diag_u))},"
            f" magnitude {diag_u.min():.3e})"
        )
    base_centroids = np.stack(
        [mesh.vertices[components == c].mean(axis=0) for c in range(ncomp)]
    )
    return PoissonSolver(
        mesh=mesh,
        laplacian=laplacian,
        grad=grad,
        mass=mass,
        _lu=lu,
        _keep=keep,
        _components=components,
        _base_centroids=base_centroids,
    )


def solve_positions(solver: PoissonSolver, jacobians: JacobianField) -> np.ndarray:
    return solver.solve_positions(jacobians)


def solve_adjoint(solver: PoissonSolver, loss_grad_vertices: np.ndarray) -> np.ndarray:
    return solver.solve_adjoint(loss_grad_vertices)
