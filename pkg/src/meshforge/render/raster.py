"""Perspective rasterization producing geometric framebuffers."""

import numpy as np

from ..camera import Camera
from ..mesh import Mesh
from . import kernels
from .buffers import NORMAL_BACKGROUND, FrameBuffers, encode_normals

NEAR_PLANE = 1e-6  # faces with any corner at depth <= NEAR_PLANE are skipped


def face_flip_signs(vertices: np.ndarray, faces: np.ndarray, eye: np.ndarray) -> np.ndarray:
    """Two-sided orientation: +1 where the CCW normal faces the camera.

    n . (eye - x) is constant over a face's plane, so the sign is exact for
    every point on the face.
    """
    p0 = vertices[faces[:, 0]]
    cross = np.cross(vertices[faces[:, 1]] - p0, vertices[faces[:, 2]] - p0)
    side = np.einsum("ij,ij->i", cross, eye - p0)
    return np.where(side >= 0.0, 1.0, -1.0)


def rasterize(mesh: Mesh, camera: Camera, backend: str | None = None) -> FrameBuffers:
    """Z-buffered two-sided rasterization with flat per-face normals.

    Returns deterministic buffers: identical inputs give bit-identical
    output. Faces crossing the near plane are skipped entirely (no
    clipping); empty coverage is a valid result.
    """
    screen, depth_corner = camera.project(mesh.corner_positions)
    valid = (depth_corner > NEAR_PLANE).all(axis=1)
    face_id, bary, zbuf = kernels.fill_buffers(
        screen, depth_corner, valid, camera.height, camera.width, backend=backend
    )

    flip = face_flip_signs(mesh.vertices, mesh.faces, camera.eye)
    normal_img = np.full((camera.height, camera.width, 3), NORMAL_BACKGROUND, dtype=np.float64)
    covered = face_id >= 0
    if covered.any():
        f = face_id[covered]
        n_world = mesh.face_normals[f] * flip[f][:, None]
        n_cam = n_world @ camera.rotation.T
        normal_img[covered] = encode_normals(n_cam)

    return FrameBuffers(
        camera=camera,
        vertices=mesh.vertices,
        faces=mesh.faces,
        face_id=face_id,
        barycentrics=bary,
        depth=zbuf,
        normal=normal_img,
        flip_sign=flip,
    )
