"""Spherical-coordinate cameras, pose sampling, and projection math.

Conventions: y-up world, camera looks down its local -z axis, pixel centers
at integer coordinates with row 0 at the top of the image. Depth is the
camera-space distance -z (planar, not euclidean).
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigError


def spherical_direction(azimuth: float, elevation: float) -> np.ndarray:
    """Unit vector at (azimuth, elevation); azimuth 0 looks down +z."""
    ce = np.cos(elevation)
    return np.array([ce * np.sin(azimuth), np.sin(elevation), ce * np.cos(azimuth)])


@dataclass(frozen=True)
class Camera:
    azimuth: float
    elevation: float
    radius: float
    fov_y: float = np.deg2rad(45.0)
    width: int = 512
    height: int = 512
    look_at: tuple = (0.0, 0.0, 0.0)
    up: tuple = (0.0, 1.0, 0.0)

    def __post_init__(self):
        if not (0.0 < self.fov_y < np.pi):
            raise ConfigError(f"fov_y must be in (0, pi), got {self.fov_y}")
        if self.radius <= 0.0:
            raise ConfigError(f"radius must be positive, got {self.radius}")
        if self.width < 1 or self.height < 1:
            raise ConfigError("resolution components must be >= 1")

    @cached_property
    def eye(self) -> np.ndarray:
        return np.asarray(self.look_at, dtype=np.float64) + self.radius * spherical_direction(
            self.azimuth, self.elevation
        )

    @cached_property
    def rotation(self) -> np.ndarray:
        """World-to-camera rotation; rows are (right, up, -forward)."""
        fwd = np.asarray(self.look_at, dtype=np.float64) - self.eye
        fwd = fwd / np.linalg.norm(fwd)
        up = np.asarray(self.up, dtype=np.float64)
        right = np.cross(fwd, up)
        if np.linalg.norm(right) < 1e-9:  # looking along up: fall back to z-up
            right = np.cross(fwd, np.array([0.0, 0.0, 1.0]))
        right = right / np.linalg.norm(right)
        true_up = np.cross(right, fwd)
        return np.stack([right, true_up, -fwd])

    @cached_property
    def tan_half(self) -> tuple[float, float]:
        ty = float(np.tan(self.fov_y / 2.0))
        return ty * self.width / self.height, ty

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.eye) @ self.rotation.T

    def project(self, points: np.ndarray):
        """World points -> (screen_xy, depth) with depth = -z_camera.

        Screen x is the pixel column, y the pixel row; points behind the
        camera get non-positive depth and meaningless screen coordinates.
        """
        q = self.world_to_camera(points)
        w = -q[..., 2]
        tan_x, tan_y = self.tan_half
        safe = np.where(w == 0.0, 1.0, w)
        sx = (q[..., 0] / (safe * tan_x) * 0.5 + 0.5) * self.width - 0.5
        sy = (0.5 - q[..., 1] / (safe * tan_y) * 0.5) * self.height - 0.5
        return np.stack([sx, sy], axis=-1), w

    def with_resolution(self, width: int, height: int) -> "Camera":
        return Camera(
            self.azimuth, self.elevation, self.radius, self.fov_y,
            width, height, self.look_at, self.up,
        )


def camera_from_dict(spec: dict) -> Camera:
    """Camera from a JSON-style mapping (fixture files, wire handshakes)."""
    spec = dict(spec)
    for key in ("look_at", "up"):
        if key in spec:
            spec[key] = tuple(spec[key])
    return Camera(**spec)


@dataclass(frozen=True)
class CameraConfig:
    """Ranges for random pose sampling (radians)."""

    elevation_range: tuple = (np.deg2rad(-15.0), np.deg2rad(60.0))
    radius: float = 2.5
    fov_y: float = np.deg2rad(45.0)
    width: int = 512
    height: int = 512
    look_at: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        lo, hi = self.elevation_range
        if lo > hi:
            raise ConfigError(f"empty elevation band [{lo}, {hi}]")
        if not (-np.pi / 2 <= lo <= np.pi / 2 and -np.pi / 2 <= hi <= np.pi / 2):
            raise ConfigError("elevation band must lie within [-pi/2, pi/2]")


def sample_camera(rng: np.random.Generator, config: CameraConfig) -> Camera:
    """Pose uniform on the sphere band: azimuth uniform, elevation sin-weighted.

    Deterministic under a fixed generator state; azimuth is drawn first.
    """
    azimuth = float(rng.uniform(0.0, 2.0 * np.pi))
    lo, hi = config.elevation_range
    z = float(rng.uniform(np.sin(lo), np.sin(hi)))
    elevation = float(np.arcsin(np.clip(z, -1.0, 1.0)))
    return Camera(
        azimuth=azimuth,
        elevation=elevation,
        radius=config.radius,
        fov_y=config.fov_y,
        width=config.width,
        height=config.height,
        look_at=config.look_at,
    )


def ring_cameras(
    count: int,
    radius: float,
    *,
    elevation: float = np.deg2rad(15.0),
    cap_elevation: float = np.deg2rad(75.0),
    caps: bool = True,
    fov_y: float = np.deg2rad(45.0),
    width: int = 512,
    height: int = 512,
    look_at=(0.0, 0.0, 0.0),
) -> list[Camera]:
    """Equal-azimuth ring plus optional top/bottom cap views.

    With caps, count-2 views share the ring elevation and the last two look
    from above and below.
    """
    ring_n = count - 2 if caps and count > 2 else count
    cams = [
        Camera(2.0 * np.pi * k / ring_n, elevation, radius, fov_y, width, height, look_at)
        for k in range(ring_n)
    ]
    if caps and count > 2:
        cams.append(Camera(0.0, cap_elevation, radius, fov_y, width, height, look_at))
        cams.append(Camera(0.0, -cap_elevation, radius, fov_y, width, height, look_at))
    return cams
