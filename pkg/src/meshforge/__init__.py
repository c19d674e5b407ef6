"""Guidance-driven triangle mesh deformation and texturing.

Coarse-to-fine pipeline: per-triangle Jacobian deformation recovered
through a prefactored Poisson solve, differentiable software rasterization
of normal/depth/color maps, score-distillation guidance behind a pluggable
provider interface, multi-view texture painting by back-projection, and a
joint mesh+texture refinement stage.
"""

from .camera import Camera, CameraConfig, ring_cameras, sample_camera
from .errors import (
    ConfigError,
    DegenerateFaceError,
    FactorizationError,
    GuidanceError,
    MeshError,
    ObjParseError,
    PipelineError,
    ProtocolError,
)
from .guidance import (
    AnalyticOracle,
    GuidanceProvider,
    LatentMapper,
    NoiseSchedule,
    RemoteProvider,
    SdsConfig,
    add_noise,
    sds_gradient,
    sds_sample,
)
from .mesh import Mesh
from .obj_io import load_mesh, save_mesh
from .operators import assemble_poisson_system, face_gradient_operator, mass_matrix
from .poisson import JacobianField, PoissonSolver, build_solver, solve_adjoint, solve_positions
from .render import ShadingConfig, backprop_pixels, rasterize, shade_textured
from .texture import TextureAtlas, ViewSchedule, generate_atlas, paint, project_view, view_masks

__version__ = "0.1.0"

__all__ = [
    "AnalyticOracle",
    "Camera",
    "CameraConfig",
    "ConfigError",
    "DegenerateFaceError",
    "FactorizationError",
    "GuidanceError",
    "GuidanceProvider",
    "JacobianField",
    "LatentMapper",
    "Mesh",
    "MeshError",
    "NoiseSchedule",
    "ObjParseError",
    "PipelineError",
    "PoissonSolver",
    "ProtocolError",
    "RemoteProvider",
    "SdsConfig",
    "ShadingConfig",
    "TextureAtlas",
    "ViewSchedule",
    "add_noise",
    "assemble_poisson_system",
    "backprop_pixels",
    "build_solver",
    "face_gradient_operator",
    "generate_atlas",
    "load_mesh",
    "mass_matrix",
    "paint",
    "project_view",
    "rasterize",
    "ring_cameras",
    "sample_camera",
    "save_mesh",
    "sds_gradient",
    "sds_sample",
    "shade_textured",
    "solve_adjoint",
    "solve_positions",
    "view_masks",
]
