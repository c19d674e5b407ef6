"""Framebuffer container and buffer export helpers."""

from dataclasses import dataclass

import numpy as np
from PIL import Image

NORMAL_BACKGROUND = 0.5  # encoded value on uncovered pixels


@dataclass(eq=False)
class FrameBuffers:
    """Per-pixel outputs of one rasterization pass.

    mask is true exactly where face_id >= 0 and depth is finite. Barycentric
    coordinates are perspective-correct and sum to 1 on covered pixels.
    color stays None until a shading pass fills it.
    """

    camera: object
    vertices: np.ndarray  # positions the pass rendered, kept for backprop
    faces: np.ndarray
    face_id: np.ndarray  # (H, W) int32, -1 where empty
    barycentrics: np.ndarray  # (H, W, 3) float64
    depth: np.ndarray  # (H, W) float64, +inf where empty
    normal: np.ndarray  # (H, W, 3) float64 encoded camera-space normals
    flip_sign: np.ndarray  # (m,) float64, two-sided orientation per face
    color: np.ndarray | None = None

    @property
    def mask(self) -> np.ndarray:
        return self.face_id >= 0

    def coverage(self) -> float:
        return float(self.mask.mean())


def decode_normals(encoded: np.ndarray) -> np.ndarray:
    return encoded * 2.0 - 1.0


def encode_normals(normals: np.ndarray) -> np.ndarray:
    return normals * 0.5 + 0.5


def save_image_png(path, image: np.ndarray) -> None:
    """(H, W) or (H, W, 3) floats in [0, 1] -> 8-bit PNG."""
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    data = np.rint(arr * 255.0).astype(np.uint8)
    mode = "L" if data.ndim == 2 else "RGB"
    Image.fromarray(data, mode=mode).save(path, format="PNG")


def save_mask_png(path, mask: np.ndarray) -> None:
    """Boolean (H, W) -> 1-bit PNG."""
    Image.fromarray(np.asarray(mask, dtype=bool)).save(path, format="PNG")


def tone_map_depth(depth: np.ndarray) -> np.ndarray:
    """Finite depths to [0, 1] grayscale (near bright), background 0."""
    finite = np.isfinite(depth)
    out = np.zeros_like(depth)
    if finite.any():
        lo, hi = depth[finite].min(), depth[finite].max()
        span = hi - lo if hi > lo else 1.0
        out[finite] = 1.0 - (depth[finite] - lo) / span * 0.9
    return out


def save_depth_png(path, depth: np.ndarray) -> None:
    save_image_png(path, tone_map_depth(depth))


def dump_array(path, array: np.ndarray) -> None:
    """Deterministic float dump (.npy: little-endian raw plus shape header)."""
    np.save(path, np.ascontiguousarray(array))


def load_array(path) -> np.ndarray:
    return np.load(path)
