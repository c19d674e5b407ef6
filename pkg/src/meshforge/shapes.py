"""Procedural primitives used by the CLI demos and test fixtures."""

import numpy as np

from .mesh import Mesh


def triangle() -> Mesh:
    """Single right triangle in the z=0 plane."""
    v = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    f = np.array([[0, 1, 2]])
    return Mesh(v, f)


def quad(side: float = 1.0, z: float = 0.0) -> Mesh:
    """Axis-aligned square of two triangles, centered on the z axis."""
    h = side / 2.0
    v = np.array([[-h, -h, z], [h, -h, z], [h, h, z], [-h, h, z]])
    f = np.array([[0, 1, 2], [0, 2, 3]])
    return Mesh(v, f)


def tetrahedron(scale: float = 1.0) -> Mesh:
    v = scale * np.array(
        [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]]
    )
    f = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])
    return Mesh(v, f)


def cube(side: float = 1.0) -> Mesh:
    """Axis-aligned cube (8 vertices, 12 triangles) centered at the origin."""
    h = side / 2.0
    v = np.array(
        [
            [-h, -h, -h],
            [h, -h, -h],
            [h, h, -h],
            [-h, h, -h],
            [-h, -h, h],
            [h, -h, h],
            [h, h, h],
            [-h, h, h],
        ]
    )
    f = np.array(
        [
            [0, 2, 1],
            [0, 3, 2],
            [4, 5, 6],
            [4, 6, 7],
            [0, 1, 5],
            [0, 5, 4],
            [2, 3, 7],
            [2, 7, 6],
            [1, 2, 6],
            [1, 6, 5],
            [3, 0, 4],
            [3, 4, 7],
        ]
    )
    return Mesh(v, f)


def icosahedron(radius: float = 1.0) -> Mesh:
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array(
        [
            [-1, phi, 0],
            [1, phi, 0],
            [-1, -phi, 0],
            [1, -phi, 0],
            [0, -1, phi],
            [0, 1, phi],
            [0, -1, -phi],
            [0, 1, -phi],
            [phi, 0, -1],
            [phi, 0, 1],
            [-phi, 0, -1],
            [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    v *= radius / np.linalg.norm(v[0])
    f = np.array(
        [
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ]
    )
    return Mesh(v, f)


def icosphere(subdivisions: int = 2, radius: float = 1.0) -> Mesh:
    """Subdivided icosahedron projected to a sphere.

    subdivisions=3 gives 642 vertices / 1280 faces.
    """
    mesh = icosahedron(radius)
    verts = [tuple(p) for p in mesh.vertices]
    faces = mesh.faces.tolist()
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key in cache:
                return cache[key]
            p = np.array(verts[a]) + np.array(verts[b])
            p *= radius / np.linalg.norm(p)
            verts.append(tuple(p))
            cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = new_faces
    return Mesh(np.array(verts), np.array(faces))


def uv_sphere(segments: int = 24, bands: int = 21, radius: float = 1.0) -> Mesh:
    """Latitude/longitude sphere; the defaults give 2*24*20 = 960 faces."""
    verts = [[0.0, radius, 0.0]]
    for i in range(1, bands):
        theta = np.pi * i / bands
        for j in range(segments):
            phi = 2.0 * np.pi * j / segments
            verts.append(
                [
                    radius * np.sin(theta) * np.cos(phi),
                    radius * np.cos(theta),
                    radius * np.sin(theta) * np.sin(phi),
                ]
            )
    verts.append([0.0, -radius, 0.0])
    top, bottom = 0, len(verts) - 1
    ring = lambda i: 1 + (i - 1) * segments  # noqa: E731 - local index helper

    faces = []
    for j in range(segments):
        faces.append([top, ring(1) + (j + 1) % segments, ring(1) + j])
    for i in range(1, bands - 1):
        for j in range(segments):
            a = ring(i) + j
            b = ring(i) + (j + 1) % segments
            c = ring(i + 1) + j
            d = ring(i + 1) + (j + 1) % segments
            faces.append([a, b, d])
            faces.append([a, d, c])
    for j in range(segments):
        faces.append([bottom, ring(bands - 1) + j, ring(bands - 1) + (j + 1) % segments])
    return Mesh(np.array(verts), np.array(faces))


def blob(subdivisions: int = 4, radius: float = 1.0, amplitude: float = 0.18, seed: int = 7) -> Mesh:
    """Icosphere with smooth seeded radial bumps (a Stanford-style test blob).

    subdivisions=4 gives 5120 faces.
    """
    base = icosphere(subdivisions, radius)
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((6, 3))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    weights = rng.uniform(0.3, 1.0, size=6)
    v = base.vertices.copy()
    dirs = v / np.linalg.norm(v, axis=1, keepdims=True)
    bump = np.zeros(len(v))
    for c, w in zip(centers, weights):
        bump += w * np.exp(-4.0 * (1.0 - dirs @ c))
    scale = 1.0 + amplitude * (bump - bump.mean()) / (np.abs(bump).max() + 1e-12)
    return Mesh(v * scale[:, None], base.faces)
