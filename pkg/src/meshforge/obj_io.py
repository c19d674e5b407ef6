"""Wavefront OBJ / MTL / PNG import and export.

Supported OBJ subset: ``v``, ``vt`` and ``f`` records with 1-based indices
(``f v``, ``f v/vt``, ``f v/vt/vn`` and ``f v//vn`` forms). Quads are
fan-triangulated at load; higher-arity polygons are rejected. Texture
images ride along as 8-bit RGB PNG referenced from an MTL ``map_Kd``.
"""

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import MeshError, ObjParseError
from .mesh import Mesh


@dataclass
class LoadedMesh:
    mesh: Mesh
    uvs: np.ndarray | None  # (m, 3, 2) per-corner UVs when vt records exist
    texture: np.ndarray | None  # (R, R, 3) float64 in [0, 1], v-up row order


def _parse_corner(token: str, path, lineno: int) -> tuple[int, int | None]:
    parts = token.split("/")
    if len(parts) > 3 or parts[0] == "":
        raise ObjParseError(path, lineno, f"malformed face corner {token!r}")
    try:
        vi = int(parts[0])
        ti = int(parts[1]) if len(parts) > 1 and parts[1] != "" else None
    except ValueError:
        raise ObjParseError(path, lineno, f"non-integer face index in {token!r}") from None
    return vi, ti


def _resolve(idx: int, count: int, path, lineno: int) -> int:
    # OBJ indices are 1-based; negative indices count back from the end.
    out = idx - 1 if idx > 0 else count + idx
    if out < 0 or out >= count:
        raise ObjParseError(path, lineno, f"index {idx} out of range (have {count})")
    return out


def load_mesh(path) -> LoadedMesh:
    """Load an OBJ file, with per-corner UVs and texture when present.

    Raises ObjParseError with the offending line number on malformed input
    and MeshError (subclass DegenerateFaceError) on invalid geometry.
    """
    verts: list[list[float]] = []
    texcoords: list[list[float]] = []
    corners: list[list[int]] = []
    corner_uvs: list[list[int | None]] = []
    mtllib = None

    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            tag = fields[0]
            if tag == "v":
                if len(fields) < 4:
                    raise ObjParseError(path, lineno, "v record needs 3 coordinates")
                try:
                    verts.append([float(x) for x in fields[1:4]])
                except ValueError:
                    raise ObjParseError(path, lineno, "non-numeric vertex coordinate") from None
            elif tag == "vt":
                if len(fields) < 3:
                    raise ObjParseError(path, lineno, "vt record needs 2 coordinates")
                try:
                    texcoords.append([float(x) for x in fields[1:3]])
                except ValueError:
                    raise ObjParseError(path, lineno, "non-numeric texture coordinate") from None
            elif tag == "f":
                toks = fields[1:]
                if len(toks) < 3:
                    raise ObjParseError(path, lineno, "face needs at least 3 corners")
                if len(toks) > 4:
                    raise ObjParseError(
                        path, lineno, f"{len(toks)}-gon faces unsupported (triangles/quads only)"
                    )
                parsed = [_parse_corner(t, path, lineno) for t in toks]
                vids = [_resolve(vi, len(verts), path, lineno) for vi, _ in parsed]
                tids = [
                    _resolve(ti, len(texcoords), path, lineno) if ti is not None else None
                    for _, ti in parsed
                ]
                tris = [(0, 1, 2)] if len(toks) == 3 else [(0, 1, 2), (0, 2, 3)]
                for a, b, c in tris:
                    corners.append([vids[a], vids[b], vids[c]])
                    corner_uvs.append([tids[a], tids[b], tids[c]])
            elif tag == "mtllib" and len(fields) > 1:
                mtllib = fields[1]
            # vn / usemtl / o / g / s records are accepted and ignored

    if not verts:
        raise ObjParseError(path, 0, "no vertices found")
    if not corners:
        raise ObjParseError(path, 0, "no faces found")

    mesh = Mesh(np.array(verts), np.array(corners, dtype=np.int64))

    uvs = None
    have_uv = [all(t is not None for t in tri) for tri in corner_uvs]
    if texcoords and all(have_uv):
        tc = np.array(texcoords)
        uvs = tc[np.array([[t for t in tri] for tri in corner_uvs], dtype=np.int64)]
    texture = _load_texture(path, mtllib) if mtllib else None
    return LoadedMesh(mesh=mesh, uvs=uvs, texture=texture)


def _load_texture(obj_path, mtllib) -> np.ndarray | None:
    mtl_path = os.path.join(os.path.dirname(os.path.abspath(obj_path)), mtllib)
    if not os.path.exists(mtl_path):
        return None
    map_kd = None
    with open(mtl_path, "r", encoding="utf-8") as fh:
        for line in fh:
            fields = line.split()
            if fields and fields[0] == "map_Kd" and len(fields) > 1:
                map_kd = fields[1]
    if map_kd is None:
        return None
    png_path = os.path.join(os.path.dirname(mtl_path), map_kd)
    if not os.path.exists(png_path):
        return None
    return load_texture_png(png_path)


def load_texture_png(path) -> np.ndarray:
    """PNG -> (H, W, 3) float64 in [0, 1], flipped to v-up texel row order."""
    img = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64) / 255.0
    return img[::-1].copy()


def save_texture_png(path, texels: np.ndarray) -> None:
    """(H, W, 3) floats in [0, 1], v-up row order -> 8-bit RGB PNG."""
    arr = np.clip(np.asarray(texels, dtype=np.float64), 0.0, 1.0)
    data = np.rint(arr[::-1] * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path, format="PNG")


def save_mesh(mesh: Mesh, path, uvs=None, texture=None) -> None:
    """Write OBJ (plus MTL and PNG when a texture is given).

    Positions are formatted with 9 significant digits, so a load/save round
    trip is identity on connectivity and identity-within-formatting on
    positions and UVs.
    """
    if texture is not None and uvs is None:
        raise MeshError("texture requires per-corner UVs")
    base, _ = os.path.splitext(path)
    name = os.path.basename(base)
    lines = [f"# meshforge: {mesh.n_vertices} vertices, {mesh.n_faces} faces"]
    if texture is not None:
        lines.append(f"mtllib {name}.mtl")
    for p in mesh.vertices:
        lines.append(f"v {p[0]:.9g} {p[1]:.9g} {p[2]:.9g}")
    if uvs is not None:
        uvs = np.asarray(uvs, dtype=np.float64)
        if uvs.shape != (mesh.n_faces, 3, 2):
            raise MeshError(f"uvs must be (m, 3, 2), got {uvs.shape}")
        flat = uvs.reshape(-1, 2)
        for t in flat:
            lines.append(f"vt {t[0]:.9g} {t[1]:.9g}")
        if texture is not None:
            lines.append(f"usemtl {name}")
        for k, face in enumerate(mesh.faces):
            t0, t1, t2 = 3 * k + 1, 3 * k + 2, 3 * k + 3
            lines.append(f"f {face[0] + 1}/{t0} {face[1] + 1}/{t1} {face[2] + 1}/{t2}")
    else:
        for face in mesh.faces:
            lines.append(f"f {face[0] + 1} {face[1] + 1} {face[2] + 1}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")

    if texture is not None:
        with open(f"{base}.mtl", "w", encoding="utf-8") as fh:
            fh.write(f"newmtl {name}\nKa 1 1 1\nKd 1 1 1\nmap_Kd {name}.png\n")
        save_texture_png(f"{base}.png", texture)
