from .backprop import backprop_pixels
from .buffers import (
    FrameBuffers,
    decode_normals,
    dump_array,
    encode_normals,
    load_array,
    save_depth_png,
    save_image_png,
    save_mask_png,
    tone_map_depth,
)
from .kernels import ACTIVE_BACKEND, available_backends
from .raster import rasterize
from .shading import ShadingConfig, sample_bilinear, shade_textured

__all__ = [
    "ACTIVE_BACKEND",
    "FrameBuffers",
    "ShadingConfig",
    "available_backends",
    "backprop_pixels",
    "decode_normals",
    "dump_array",
    "encode_normals",
    "load_array",
    "rasterize",
    "sample_bilinear",
    "save_depth_png",
    "save_image_png",
    "save_mask_png",
    "shade_textured",
    "tone_map_depth",
]
