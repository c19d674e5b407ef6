"""Deferred texture shading: UV interpolation, bilinear fetch, headlight."""

from dataclasses import dataclass

import numpy as np

from .buffers import FrameBuffers


@dataclass(frozen=True)
class ShadingConfig:
    """Lambertian headlight: ambient + diffuse * max(0, n . v), no specular."""

    ambient: float = 0.3
    diffuse: float = 0.7
    background: tuple = (0.0, 0.0, 0.0)


def bilinear_weights(x: np.ndarray, y: np.ndarray, height: int, width: int):
    """Sample positions -> 4 corner (row, col) indices and weights.

    Texel/pixel centers sit at integer coordinates; indices are clamped to
    the grid (clamp address mode).
    """
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = x - x0
    fy = y - y0
    j = x0.astype(np.int64)
    i = y0.astype(np.int64)
    j0 = np.clip(j, 0, width - 1)
    j1 = np.clip(j + 1, 0, width - 1)
    i0 = np.clip(i, 0, height - 1)
    i1 = np.clip(i + 1, 0, height - 1)
    w00 = (1.0 - fx) * (1.0 - fy)
    w01 = fx * (1.0 - fy)
    w10 = (1.0 - fx) * fy
    w11 = fx * fy
    return (i0, j0, i1, j1), (w00, w01, w10, w11), (fx, fy)


def sample_bilinear(image: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Bilinear fetch from (H, W, C) at fractional (x, y) pixel coordinates."""
    (i0, j0, i1, j1), (w00, w01, w10, w11), _ = bilinear_weights(
        x, y, image.shape[0], image.shape[1]
    )
    return (
        image[i0, j0] * w00[..., None]
        + image[i0, j1] * w01[..., None]
        + image[i1, j0] * w10[..., None]
        + image[i1, j1] * w11[..., None]
    )


def uv_to_texel_coords(uv: np.ndarray, resolution: int):
    """UV in [0,1]^2 -> fractional texel (x=col, y=row) with centers at integers."""
    tx = uv[..., 0] * resolution - 0.5
    ty = uv[..., 1] * resolution - 0.5
    return tx, ty


def interpolate_uv(buffers: FrameBuffers, uvs: np.ndarray):
    """Per covered pixel: interpolated UV plus gather indices.

    Returns (pixel_rows, pixel_cols, face_idx, bary, uv).
    """
    covered = buffers.face_id >= 0
    rows, cols = np.nonzero(covered)
    f = buffers.face_id[rows, cols]
    b = buffers.barycentrics[rows, cols]
    uv = np.einsum("pk,pkc->pc", b, uvs[f])
    return rows, cols, f, b, uv


def shade_textured(
    buffers: FrameBuffers,
    uvs: np.ndarray,
    texels: np.ndarray,
    config: ShadingConfig = ShadingConfig(),
) -> np.ndarray:
    """Textured Lambertian-headlight image from rasterized buffers.

    Per covered pixel the UV is barycentrically interpolated, the texel
    fetched bilinearly, and the result scaled by ambient + diffuse * cos of
    the angle between the (two-sided) face normal and the view direction.
    Uncovered pixels take the background color. Also stores the image on
    buffers.color.
    """
    h, w = buffers.face_id.shape
    image = np.empty((h, w, 3), dtype=np.float64)
    image[:] = np.asarray(config.background, dtype=np.float64)
    rows, cols, f, b, uv = interpolate_uv(buffers, uvs)
    if len(rows):
        resolution = texels.shape[0]
        tx, ty = uv_to_texel_coords(uv, resolution)
        base = sample_bilinear(texels, tx, ty)

        verts = buffers.vertices
        faces = buffers.faces
        corner = verts[faces[f]]  # (p, 3, 3)
        point = np.einsum("pk,pkc->pc", b, corner)
        to_eye = buffers.camera.eye - point
        dist = np.linalg.norm(to_eye, axis=1, keepdims=True)
        view = to_eye / dist
        e1 = corner[:, 1] - corner[:, 0]
        e2 = corner[:, 2] - corner[:, 0]
        n = np.cross(e1, e2)
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        n *= buffers.flip_sign[f][:, None]
        cos = np.maximum(0.0, np.einsum("pc,pc->p", n, view))
        shade = config.ambient + config.diffuse * cos
        image[rows, cols] = base * shade[:, None]
    buffers.color = image
    return image
