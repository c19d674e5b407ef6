"""Triangle mesh container and derived per-face geometry."""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .errors import DegenerateFaceError, MeshError

# Relative degenerate-face threshold: a face is rejected when its area is
# below AREA_EPS_SCALE * (bounding box diagonal)^2, keeping the check
# scale-invariant.
AREA_EPS_SCALE = 1e-12


def _as_vertices(vertices) -> np.ndarray:
    v = np.asarray(vertices, dtype=np.float64)
    if v.ndim != 2 or v.shape[1] != 3:
        raise MeshError(f"vertices must be (n, 3), got {v.shape}")
    if not np.isfinite(v).all():
        raise MeshError("vertices contain non-finite values")
    return v


def _as_faces(faces) -> np.ndarray:
    f = np.asarray(faces)
    if f.ndim != 2 or f.shape[1] != 3:
        raise MeshError(f"faces must be (m, 3), got {f.shape}")
    if not np.issubdtype(f.dtype, np.integer):
        raise MeshError(f"faces must be integer-typed, got {f.dtype}")
    return f.astype(np.int64)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Indexed triangle mesh with float64 positions.

    Vertices are an (n, 3) array, faces an (m, 3) array of counter-clockwise
    vertex indices. Validation rejects out-of-range indices, repeated indices
    within a face, and (near-)degenerate faces. Meshes need not be manifold
    or watertight; any positive-area triangle soup is accepted.
    """

    vertices: np.ndarray
    faces: np.ndarray
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "vertices", _as_vertices(self.vertices))
        object.__setattr__(self, "faces", _as_faces(self.faces))
        if self.validate:
            self._check()
        self.vertices.setflags(write=False)
        self.faces.setflags(write=False)

    def _check(self):
        n, m = len(self.vertices), len(self.faces)
        if n < 3:
            raise MeshError(f"need at least 3 vertices, got {n}")
        if m < 1:
            raise MeshError("need at least 1 face")
        if self.faces.min() < 0 or self.faces.max() >= n:
            bad = np.argwhere((self.faces < 0) | (self.faces >= n))[0, 0]
            raise MeshError(f"face {bad} has vertex index out of range [0, {n})")
        f = self.faces
        repeated = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
        if repeated.any():
            raise DegenerateFaceError(
                np.argmax(repeated), f"face {np.argmax(repeated)} repeats a vertex index"
            )
        small = self.face_areas <= self.area_eps
        if small.any():
            idx = int(np.argmax(small))
            raise DegenerateFaceError(
                idx, f"face {idx} has area {self.face_areas[idx]:.3e} <= eps {self.area_eps:.3e}"
            )

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @cached_property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @cached_property
    def bbox_diagonal(self) -> float:
        lo, hi = self.bbox
        return float(np.linalg.norm(hi - lo))

    @cached_property
    def area_eps(self) -> float:
        return AREA_EPS_SCALE * self.bbox_diagonal**2

    @cached_property
    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    @cached_property
    def bounding_radius(self) -> float:
        """Radius of the centroid-centered sphere enclosing all vertices."""
        return float(np.linalg.norm(self.vertices - self.centroid, axis=1).max())

    @cached_property
    def corner_positions(self) -> np.ndarray:
        """(m, 3, 3) world positions of each face's three corners."""
        return self.vertices[self.faces]

    @cached_property
    def face_cross(self) -> np.ndarray:
        """(m, 3) unnormalized face normals, cross(p1 - p0, p2 - p0)."""
        p = self.corner_positions
        return np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])

    @cached_property
    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.face_cross, axis=1)

    @cached_property
    def face_normals(self) -> np.ndarray:
        """(m, 3) unit face normals (CCW orientation)."""
        c = self.face_cross
        norm = np.linalg.norm(c, axis=1, keepdims=True)
        norm[norm == 0.0] = 1.0
        return c / norm

    @cached_property
    def face_centroids(self) -> np.ndarray:
        return self.corner_positions.mean(axis=1)

    @cached_property
    def surface_area(self) -> float:
        return float(self.face_areas.sum())

    @cached_property
    def vertex_components(self) -> np.ndarray:
        """(n,) connected-component label per vertex (face-edge connectivity).

        Vertices referenced by no face each form their own component.
        """
        n = self.n_vertices
        f = self.faces
        i = np.concatenate([f[:, 0], f[:, 1], f[:, 2]])
        j = np.concatenate([f[:, 1], f[:, 2], f[:, 0]])
        adj = sparse.coo_matrix((np.ones(len(i)), (i, j)), shape=(n, n)).tocsr()
        _, labels = csgraph.connected_components(adj, directed=False)
        return labels

    @cached_property
    def n_components(self) -> int:
        return int(self.vertex_components.max()) + 1

    def with_vertices(self, vertices, validate: bool = False) -> "Mesh":
        """Same connectivity with replaced positions.

        Skips area validation by default: mid-optimization snapshots may
        carry transiently thin faces that the rasterizer simply skips.
        """
        return Mesh(vertices, self.faces, validate=validate)
