"""Gradients of rendered pixels with respect to vertices and texels.

Differentiates the rasterized image holding the visibility assignment
fixed: each covered pixel keeps its face id (and two-sided flip sign), and
gradients flow through projection, perspective-correct barycentric
interpolation, per-face flat normals, headlight shading, and bilinear
texel fetch. Silhouette (visibility-change) gradients are excluded by
contract.
"""

import numpy as np

from .buffers import FrameBuffers
from .shading import ShadingConfig, bilinear_weights, uv_to_texel_coords


def _cross_adjoint(corner: np.ndarray, g_cross: np.ndarray):
    """Adjoint of c = cross(p1 - p0, p2 - p0): per-corner gradients."""
    e1 = corner[:, 1] - corner[:, 0]
    e2 = corner[:, 2] - corner[:, 0]
    g_p1 = np.cross(e2, g_cross)
    g_p2 = np.cross(g_cross, e1)
    g_p0 = -g_p1 - g_p2
    return g_p0, g_p1, g_p2


def _unit_normal_adjoint(corner: np.ndarray, flip: np.ndarray, g_unit: np.ndarray):
    """Adjoint of n = flip * normalize(cross(e1, e2)) at given corners."""
    e1 = corner[:, 1] - corner[:, 0]
    e2 = corner[:, 2] - corner[:, 0]
    c = np.cross(e1, e2)
    norm = np.linalg.norm(c, axis=1, keepdims=True)
    norm[norm == 0.0] = 1.0
    n_hat = c / norm
    g_hat = flip[:, None] * g_unit
    g_c = (g_hat - n_hat * np.einsum("pc,pc->p", n_hat, g_hat)[:, None]) / norm
    return _cross_adjoint(corner, g_c)


def backprop_pixels(
    buffers: FrameBuffers,
    *,
    uvs: np.ndarray | None = None,
    texels: np.ndarray | None = None,
    grad_color: np.ndarray | None = None,
    grad_normal: np.ndarray | None = None,
    grad_depth: np.ndarray | None = None,
    shading: ShadingConfig = ShadingConfig(),
):
    """Pixel-value gradients -> (grad_vertices (n, 3), grad_texels or None).

    grad_color requires uvs and texels (the shading pass inputs). Buffers
    must come from a rasterize call on the same vertex set; re-rasterize
    after every vertex update.
    """
    verts = buffers.vertices
    faces = buffers.faces
    cam = buffers.camera
    grad_vertices = np.zeros_like(verts)
    grad_texels = np.zeros_like(texels) if texels is not None else None

    covered = buffers.face_id >= 0
    rows, cols = np.nonzero(covered)
    if len(rows) == 0:
        return grad_vertices, grad_texels
    f = buffers.face_id[rows, cols]

    # Per-face accumulation target for unit-normal gradients (world space).
    g_n_face = np.zeros((len(faces), 3))

    if grad_normal is not None:
        g_enc = grad_normal[rows, cols]  # (P, 3) d(loss)/d(encoded normal)
        # encoded = 0.5 * (R @ n_world_flipped) + 0.5
        g_ncam = 0.5 * g_enc
        g_nw = g_ncam @ cam.rotation
        np.add.at(g_n_face, f, g_nw)

    needs_chain = grad_color is not None or grad_depth is not None
    if needs_chain:
        if grad_color is not None and (uvs is None or texels is None):
            raise ValueError("grad_color requires uvs and texels")
        corner = verts[faces[f]]  # (P, 3, 3)
        q = (corner - cam.eye) @ cam.rotation.T  # camera space
        w = -q[..., 2]  # (P, 3)
        tan_x, tan_y = cam.tan_half
        sx_c = (q[..., 0] / (w * tan_x) * 0.5 + 0.5) * cam.width - 0.5  # (P, 3)
        sy_c = (0.5 - q[..., 1] / (w * tan_y) * 0.5) * cam.height - 0.5
        px = cols.astype(np.float64)
        py = rows.astype(np.float64)

        x0, x1, x2 = sx_c[:, 0], sx_c[:, 1], sx_c[:, 2]
        y0, y1, y2 = sy_c[:, 0], sy_c[:, 1], sy_c[:, 2]
        e = np.stack(
            [
                (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1),
                (x0 - x2) * (py - y2) - (y0 - y2) * (px - x2),
                (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0),
            ],
            axis=1,
        )  # (P, 3)
        a = e.sum(axis=1)
        lam = e / a[:, None]
        r = lam / w
        s = r.sum(axis=1)
        b = r / s[:, None]

        g_b = np.zeros_like(b)
        g_w = np.zeros_like(w)
        g_pt = np.zeros((len(rows), 3))

        if grad_depth is not None:
            g_d = grad_depth[rows, cols]  # depth = sum_i b_i w_i
            g_b += g_d[:, None] * w
            g_w += g_d[:, None] * b

        if grad_color is not None:
            g_pix = grad_color[rows, cols]  # (P, 3)
            uv = np.einsum("pk,pkc->pc", b, uvs[f])
            resolution = texels.shape[0]
            tx, ty = uv_to_texel_coords(uv, resolution)
            (i0, j0, i1, j1), (w00, w01, w10, w11), (fx, fy) = bilinear_weights(
                tx, ty, resolution, resolution
            )
            t00, t01 = texels[i0, j0], texels[i0, j1]
            t10, t11 = texels[i1, j0], texels[i1, j1]
            base = (
                t00 * w00[:, None] + t01 * w01[:, None]
                + t10 * w10[:, None] + t11 * w11[:, None]
            )

            point = np.einsum("pk,pkc->pc", b, corner)
            to_eye = cam.eye - point
            dist = np.linalg.norm(to_eye, axis=1, keepdims=True)
            view = to_eye / dist
            flip_pix = buffers.flip_sign[f]
            e1v = corner[:, 1] - corner[:, 0]
            e2v = corner[:, 2] - corner[:, 0]
            c_vec = np.cross(e1v, e2v)
            c_norm = np.linalg.norm(c_vec, axis=1, keepdims=True)
            c_norm[c_norm == 0.0] = 1.0
            n_unit = flip_pix[:, None] * c_vec / c_norm
            cos = np.einsum("pc,pc->p", n_unit, view)
            lit = cos > 0.0
            shade = shading.ambient + shading.diffuse * np.maximum(0.0, cos)

            # d(pixel)/d(texel corners): bilinear weight x shade
            g_base = g_pix * shade[:, None]
            np.add.at(grad_texels, (i0, j0), g_base * w00[:, None])
            np.add.at(grad_texels, (i0, j1), g_base * w01[:, None])
            np.add.at(grad_texels, (i1, j0), g_base * w10[:, None])
            np.add.at(grad_texels, (i1, j1), g_base * w11[:, None])

            # d(pixel)/d(uv) through the bilinear weights
            dbase_dfx = (t01 - t00) * (1.0 - fy)[:, None] + (t11 - t10) * fy[:, None]
            dbase_dfy = (t10 - t00) * (1.0 - fx)[:, None] + (t11 - t01) * fx[:, None]
            g_fx = np.einsum("pc,pc->p", g_base, dbase_dfx)
            g_fy = np.einsum("pc,pc->p", g_base, dbase_dfy)
            g_uv = np.stack([g_fx * resolution, g_fy * resolution], axis=1)
            g_b += np.einsum("pc,pkc->pk", g_uv, uvs[f])

            # shading term: shade = ambient + diffuse * relu(n . view)
            g_shade = np.einsum("pc,pc->p", g_pix, base)
            g_cos = shading.diffuse * g_shade * lit
            g_n = g_cos[:, None] * view
            g_view = g_cos[:, None] * n_unit
            g_pt += (-g_view + view * np.einsum("pc,pc->p", view, g_view)[:, None]) / dist
            np.add.at(g_n_face, f, g_n)

            # surface point: direct corner term and barycentric term
            g_b += np.einsum("pc,pkc->pk", g_pt, corner)
            direct = b[:, :, None] * g_pt[:, None, :]  # (P, 3, 3)
            for k in range(3):
                np.add.at(grad_vertices, faces[f][:, k], direct[:, k])

        # barycentric chain: b = (lam / w) / sum(lam / w)
        g_r = (g_b - np.einsum("pk,pk->p", g_b, b)[:, None]) / s[:, None]
        g_lam = g_r / w
        g_w += -g_r * r / w
        g_e = (g_lam - np.einsum("pk,pk->p", g_lam, lam)[:, None]) / a[:, None]

        # edge-function partials w.r.t. screen corner coordinates
        g_sx = np.stack(
            [
                g_e[:, 1] * (py - y2) + g_e[:, 2] * (y1 - py),
                g_e[:, 0] * (y2 - py) + g_e[:, 2] * (py - y0),
                g_e[:, 0] * (py - y1) + g_e[:, 1] * (y0 - py),
            ],
            axis=1,
        )
        g_sy = np.stack(
            [
                g_e[:, 1] * (x2 - px) + g_e[:, 2] * (px - x1),
                g_e[:, 0] * (px - x2) + g_e[:, 2] * (x0 - px),
                g_e[:, 0] * (x1 - px) + g_e[:, 1] * (px - x0),
            ],
            axis=1,
        )

        # screen -> camera space (w = -q_z)
        g_q0 = g_sx * (0.5 * cam.width / (w * tan_x))
        g_q1 = -g_sy * (0.5 * cam.height / (w * tan_y))
        g_w += -g_sx * (0.5 * cam.width * q[..., 0] / (tan_x * w * w))
        g_w += g_sy * (0.5 * cam.height * q[..., 1] / (tan_y * w * w))
        g_q2 = -g_w
        g_q = np.stack([g_q0, g_q1, g_q2], axis=-1)  # (P, 3, 3)
        g_world = g_q @ cam.rotation  # rows transform back
        for k in range(3):
            np.add.at(grad_vertices, faces[f][:, k], g_world[:, k])

    # resolve accumulated per-face unit-normal gradients to corner positions
    # (!= 0 keeps non-finite gradients flowing so NaN guards can see them)
    active = np.nonzero(np.einsum("fc,fc->f", g_n_face, g_n_face) != 0.0)[0]
    if len(active):
        corner_a = verts[faces[active]]
        g_p0, g_p1, g_p2 = _unit_normal_adjoint(
            corner_a, buffers.flip_sign[active], g_n_face[active]
        )
        np.add.at(grad_vertices, faces[active][:, 0], g_p0)
        np.add.at(grad_vertices, faces[active][:, 1], g_p1)
        np.add.at(grad_vertices, faces[active][:, 2], g_p2)

    return grad_vertices, grad_texels
