"""UV atlas management and multi-view back-projection painting.

The atlas assigns each face a region of an RxR texel grid. Painting renders
a view, asks the guidance provider for an image (depth-conditioned for the
first view, inpainting afterwards), and splats the image back onto every
texel whose surface point passes the view's depth test, blending by a
power of the incidence cosine. No parameters are optimized.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from .camera import Camera
from .errors import ConfigError, GuidanceError, MeshError
from .guidance import CAP_DEPTH2IMG, CAP_INPAINT
from .mesh import Mesh
from .obj_io import save_texture_png
from .render.buffers import FrameBuffers, dump_array, load_array
from .render.raster import NEAR_PLANE, face_flip_signs, rasterize
from .render.shading import ShadingConfig, sample_bilinear, shade_textured, uv_to_texel_coords

FILL_EMPTY = 0
FILL_PAINTED = 1

GUTTER_TEXELS = 2  # minimum spacing between generated UV islands
MIN_LEG_TEXELS = 3  # smallest island edge that still claims >= 4 texels


@dataclass(eq=False)
class TextureAtlas:
    """Per-corner UVs plus a texel grid with fill state and blend weights."""

    uvs: np.ndarray  # (m, 3, 2) in [0, 1]
    texels: np.ndarray  # (R, R, 3) in [0, 1], row index follows v
    fill: np.ndarray  # (R, R) uint8, FILL_EMPTY / FILL_PAINTED
    weight: np.ndarray  # (R, R) accumulated blend confidence
    bound_face_count: int
    _table: tuple | None = field(default=None, repr=False)

    @property
    def resolution(self) -> int:
        return self.texels.shape[0]

    def check_mesh(self, mesh: Mesh):
        if mesh.n_faces != self.bound_face_count:
            raise MeshError(
                f"atlas bound to {self.bound_face_count} faces, mesh has {mesh.n_faces}"
            )

    def texel_table(self):
        """Claimed texels: (rows, cols, face, barycentric) arrays.

        Built once by rasterizing every UV triangle over texel centers;
        cached on the atlas (UVs are immutable).
        """
        if self._table is None:
            self._table = _build_texel_table(self.uvs, self.resolution)
        return self._table

    def coverage(self) -> float:
        rows, cols, _, _ = self.texel_table()
        if len(rows) == 0:
            return 0.0
        return float((self.fill[rows, cols] == FILL_PAINTED).mean())

    def copy(self) -> "TextureAtlas":
        return TextureAtlas(
            uvs=self.uvs,
            texels=self.texels.copy(),
            fill=self.fill.copy(),
            weight=self.weight.copy(),
            bound_face_count=self.bound_face_count,
            _table=self._table,
        )

    def save(self, directory):
        """Lossless checkpoint: float arrays plus a preview PNG."""
        os.makedirs(directory, exist_ok=True)
        dump_array(os.path.join(directory, "texels.npy"), self.texels)
        dump_array(os.path.join(directory, "weight.npy"), self.weight)
        dump_array(os.path.join(directory, "fill.npy"), self.fill)
        dump_array(os.path.join(directory, "uvs.npy"), self.uvs)
        save_texture_png(os.path.join(directory, "texels.png"), self.texels)

    @classmethod
    def load(cls, directory) -> "TextureAtlas":
        uvs = load_array(os.path.join(directory, "uvs.npy"))
        return cls(
            uvs=uvs,
            texels=load_array(os.path.join(directory, "texels.npy")),
            fill=load_array(os.path.join(directory, "fill.npy")),
            weight=load_array(os.path.join(directory, "weight.npy")),
            bound_face_count=len(uvs),
        )


def _build_texel_table(uvs: np.ndarray, resolution: int):
    rows_out, cols_out, face_out, bary_out = [], [], [], []
    corners = uvs * resolution - 0.5  # fractional texel coordinates
    for k in range(len(uvs)):
        (x0, y0), (x1, y1), (x2, y2) = corners[k]
        area2 = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area2 == 0.0:
            continue
        lo_x = max(0, int(np.ceil(min(x0, x1, x2))))
        hi_x = min(resolution - 1, int(np.floor(max(x0, x1, x2))))
        lo_y = max(0, int(np.ceil(min(y0, y1, y2))))
        hi_y = min(resolution - 1, int(np.floor(max(y0, y1, y2))))
        if lo_x > hi_x or lo_y > hi_y:
            continue
        px = np.arange(lo_x, hi_x + 1, dtype=np.float64)[None, :]
        py = np.arange(lo_y, hi_y + 1, dtype=np.float64)[:, None]
        e0 = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        e1 = (x0 - x2) * (py - y2) - (y0 - y2) * (px - x2)
        e2 = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)
        if area2 > 0.0:
            inside = (e0 >= 0.0) & (e1 >= 0.0) & (e2 >= 0.0)
        else:
            inside = (e0 <= 0.0) & (e1 <= 0.0) & (e2 <= 0.0)
        iy, ix = np.nonzero(inside)
        if len(iy) == 0:
            continue
        lam = np.stack([e0[inside], e1[inside], e2[inside]], axis=1) / area2
        rows_out.append(iy + lo_y)
        cols_out.append(ix + lo_x)
        face_out.append(np.full(len(iy), k, dtype=np.int64))
        bary_out.append(lam)
    if not rows_out:
        return (np.empty(0, np.int64), np.empty(0, np.int64),
                np.empty(0, np.int64), np.empty((0, 3)))
    return (
        np.concatenate(rows_out),
        np.concatenate(cols_out),
        np.concatenate(face_out),
        np.concatenate(bary_out),
    )


def generate_atlas(mesh: Mesh, resolution: int, uvs: np.ndarray | None = None,
                   base_color: float = 0.5) -> TextureAtlas:
    """Authored UVs pass through; otherwise per-triangle grid packing.

    Generated islands are isolated right triangles on a uniform cell grid
    with a >= 2 texel gutter, so no texel is ever claimed by two faces.
    """
    if resolution < 64:
        raise ConfigError(f"atlas resolution must be >= 64, got {resolution}")
    m = mesh.n_faces
    if uvs is not None:
        uvs = np.asarray(uvs, dtype=np.float64)
        if uvs.shape != (m, 3, 2):
            raise MeshError(f"uvs must be ({m}, 3, 2), got {uvs.shape}")
    else:
        cells = int(np.ceil(np.sqrt(m)))
        cell = resolution // cells
        leg = cell - GUTTER_TEXELS
        if leg < MIN_LEG_TEXELS:
            need = (MIN_LEG_TEXELS + GUTTER_TEXELS) * cells
            raise ConfigError(
                f"resolution {resolution} too small for {m} faces; need >= {need}"
            )
        uvs = np.empty((m, 3, 2))
        for k in range(m):
            ci, cj = divmod(k, cells)
            x0 = cj * cell + GUTTER_TEXELS / 2
            y0 = ci * cell + GUTTER_TEXELS / 2
            # corners at texel centers, half-texel inset keeps bilinear
            # lookups inside the island
            pts = np.array(
                [
                    [x0 + 0.5, y0 + 0.5],
                    [x0 + leg - 0.5, y0 + 0.5],
                    [x0 + 0.5, y0 + leg - 0.5],
                ]
            )
            uvs[k] = pts / resolution
    texels = np.full((resolution, resolution, 3), float(base_color))
    fill = np.zeros((resolution, resolution), dtype=np.uint8)
    weight = np.zeros((resolution, resolution))
    return TextureAtlas(uvs=uvs, texels=texels, fill=fill, weight=weight, bound_face_count=m)


def default_depth_tolerance(mesh: Mesh) -> float:
    return 1e-3 * mesh.bounding_radius


def project_view(
    atlas: TextureAtlas,
    mesh: Mesh,
    camera: Camera,
    image: np.ndarray,
    buffers: FrameBuffers,
    depth_tol: float | None = None,
    exponent: float = 2.0,
    shading: ShadingConfig | None = None,
) -> TextureAtlas:
    """Blend an image into every texel visible from the camera.

    Visibility is a depth test of the texel's surface point against the
    rendered z-buffer (tolerance 1e-3 x bounding radius by default); the
    blend weight is max(0, cos theta)^exponent against the two-sided face
    normal. When a shading config is given the known headlight term is
    divided out first, so texels store albedo rather than baked lighting.
    Updates the atlas in place and returns it.
    """
    atlas.check_mesh(mesh)
    image = np.asarray(image, dtype=np.float64)
    if image.shape[:2] != (camera.height, camera.width) or image.shape[:2] != buffers.depth.shape:
        raise MeshError(
            f"image {image.shape[:2]} does not match render {buffers.depth.shape}"
        )
    if depth_tol is None:
        depth_tol = default_depth_tolerance(mesh)

    rows, cols, face, bary = atlas.texel_table()
    if len(rows) == 0:
        return atlas
    corner = mesh.vertices[mesh.faces[face]]
    points = np.einsum("tk,tkc->tc", bary, corner)
    screen, depth = camera.project(points)
    sx, sy = screen[:, 0], screen[:, 1]
    inside = (
        (depth > NEAR_PLANE)
        & (sx >= 0.0) & (sx <= camera.width - 1.0)
        & (sy >= 0.0) & (sy <= camera.height - 1.0)
    )
    ix = np.clip(np.rint(sx), 0, camera.width - 1).astype(np.int64)
    iy = np.clip(np.rint(sy), 0, camera.height - 1).astype(np.int64)
    zbuf = buffers.depth[iy, ix]
    # depth test against the nearest pixel, with an exact face-id witness on
    # the 4 surrounding pixels to absorb the z-buffer's pixel-center
    # quantization at face boundaries
    jx = np.floor(sx).astype(np.int64)
    jy = np.floor(sy).astype(np.int64)
    x0 = np.clip(jx, 0, camera.width - 1)
    x1 = np.clip(jx + 1, 0, camera.width - 1)
    y0 = np.clip(jy, 0, camera.height - 1)
    y1 = np.clip(jy + 1, 0, camera.height - 1)
    witness = (
        (buffers.face_id[y0, x0] == face)
        | (buffers.face_id[y0, x1] == face)
        | (buffers.face_id[y1, x0] == face)
        | (buffers.face_id[y1, x1] == face)
    )
    visible = inside & (witness | (np.isfinite(zbuf) & (np.abs(depth - zbuf) <= depth_tol)))

    flip = face_flip_signs(mesh.vertices, mesh.faces, camera.eye)
    normals = mesh.face_normals[face] * flip[face][:, None]
    to_eye = camera.eye - points
    to_eye /= np.linalg.norm(to_eye, axis=1, keepdims=True)
    cos = np.einsum("tc,tc->t", normals, to_eye)
    blend = np.where(cos > 0.0, cos, 0.0) ** exponent
    active = visible & (blend > 0.0)
    if not active.any():
        return atlas

    colors = sample_bilinear(image, sx[active], sy[active])
    if shading is not None:
        lit = shading.ambient + shading.diffuse * np.maximum(0.0, cos[active])
        colors = colors / lit[:, None]
    r, c, wnew = rows[active], cols[active], blend[active]
    wold = atlas.weight[r, c]
    atlas.texels[r, c] = (
        wold[:, None] * atlas.texels[r, c] + wnew[:, None] * colors
    ) / (wold + wnew)[:, None]
    np.clip(atlas.texels[r, c], 0.0, 1.0, out=atlas.texels[r, c])
    atlas.weight[r, c] = wold + wnew
    atlas.fill[r, c] = FILL_PAINTED
    return atlas


def pad_gutters(atlas: TextureAtlas, passes: int = GUTTER_TEXELS + 1) -> TextureAtlas:
    """Flood unpainted texels bordering painted ones with the neighbor mean.

    Bilinear fetches near island edges otherwise blend in never-painted
    gutter texels. Padding leaves fill state and weights untouched, so later
    projections overwrite it cleanly.
    """
    filled = (atlas.fill == FILL_PAINTED).astype(np.float64)
    texels = atlas.texels
    shifts = [(di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1) if (di, dj) != (0, 0)]
    for _ in range(passes):
        acc = np.zeros_like(texels)
        count = np.zeros(filled.shape)
        for di, dj in shifts:
            shifted = np.roll(np.roll(filled, di, axis=0), dj, axis=1)
            color = np.roll(np.roll(texels * filled[:, :, None], di, axis=0), dj, axis=1)
            if di == 1:
                shifted[0] = 0.0
                color[0] = 0.0
            elif di == -1:
                shifted[-1] = 0.0
                color[-1] = 0.0
            if dj == 1:
                shifted[:, 0] = 0.0
                color[:, 0] = 0.0
            elif dj == -1:
                shifted[:, -1] = 0.0
                color[:, -1] = 0.0
            acc += color
            count += shifted
        grow = (filled == 0.0) & (count > 0.0)
        texels[grow] = acc[grow] / count[grow][:, None]
        filled[grow] = 1.0
    return atlas


def view_masks(atlas: TextureAtlas, mesh: Mesh, camera: Camera, buffers: FrameBuffers):
    """(generate_mask, keep_mask): covered pixels split by dominant texel state.

    The dominant texel is the one with the largest bilinear weight at the
    pixel's interpolated UV. The masks are disjoint and exactly partition
    the coverage mask.
    """
    atlas.check_mesh(mesh)
    covered = buffers.face_id >= 0
    generate = np.zeros_like(covered)
    keep = np.zeros_like(covered)
    rows, cols = np.nonzero(covered)
    if len(rows) == 0:
        return generate, keep
    f = buffers.face_id[rows, cols]
    b = buffers.barycentrics[rows, cols]
    uv = np.einsum("pk,pkc->pc", b, atlas.uvs[f])
    tx, ty = uv_to_texel_coords(uv, atlas.resolution)
    jx = np.clip(np.rint(tx), 0, atlas.resolution - 1).astype(np.int64)
    jy = np.clip(np.rint(ty), 0, atlas.resolution - 1).astype(np.int64)
    painted = atlas.fill[jy, jx] == FILL_PAINTED
    keep[rows, cols] = painted
    generate[rows, cols] = ~painted
    return generate, keep


@dataclass(frozen=True)
class ViewSchedule:
    """Ordered painting views: the first is depth-conditioned, the rest inpaint."""

    cameras: list
    view_ids: list | None = None

    def __post_init__(self):
        if not self.cameras:
            raise ConfigError("view schedule must contain at least one camera")
        if self.view_ids is None:
            object.__setattr__(self, "view_ids", list(range(len(self.cameras))))
        elif len(self.view_ids) != len(self.cameras):
            raise ConfigError("view_ids must match cameras")

    def mode(self, index: int) -> str:
        return "depthInit" if index == 0 else "inpaint"


def depth_conditioning(buffers: FrameBuffers) -> np.ndarray:
    """Normalized float32 depth tensor for the wire: near bright, empty 0."""
    depth = buffers.depth
    finite = np.isfinite(depth)
    out = np.zeros(depth.shape, dtype=np.float32)
    if finite.any():
        lo = float(depth[finite].min())
        hi = float(depth[finite].max())
        span = hi - lo if hi > lo else 1.0
        out[finite] = (1.0 - (depth[finite] - lo) / span * 0.9).astype(np.float32)
    return out


def paint(
    mesh: Mesh,
    atlas: TextureAtlas,
    schedule: ViewSchedule,
    provider,
    prompt: str,
    shading: ShadingConfig = ShadingConfig(),
    depth_tol: float | None = None,
    exponent: float = 2.0,
    checkpoint_dir=None,
) -> float:
    """Run the sequential painting loop; returns the final coverage fraction.

    On a provider failure the partially painted atlas is checkpointed to
    checkpoint_dir (when given) before the error propagates.
    """
    provider.require(CAP_DEPTH2IMG)
    if len(schedule.cameras) > 1:
        provider.require(CAP_INPAINT)
    for index, camera in enumerate(schedule.cameras):
        view_id = schedule.view_ids[index]
        buffers = rasterize(mesh, camera)
        depth32 = depth_conditioning(buffers)
        try:
            if schedule.mode(index) == "depthInit":
                image = provider.depth_to_image(depth32, prompt, view=view_id)
            else:
                render = shade_textured(buffers, atlas.uvs, atlas.texels, shading)
                generate, _ = view_masks(atlas, mesh, camera, buffers)
                image = provider.inpaint(
                    np.asarray(render, dtype=np.float32),
                    generate.astype(np.float32),
                    depth32,
                    prompt,
                    view=view_id,
                )
        except GuidanceError:
            if checkpoint_dir is not None:
                atlas.save(checkpoint_dir)
            raise
        image = np.asarray(image, dtype=np.float64)
        if image.shape != (camera.height, camera.width, 3):
            raise GuidanceError(f"provider returned image with shape {image.shape}")
        project_view(atlas, mesh, camera, image, buffers, depth_tol=depth_tol,
                     exponent=exponent, shading=shading)
    pad_gutters(atlas)
    return atlas.coverage()
