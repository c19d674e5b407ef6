"""Run configuration: defaults, JSON loading, and validation.

Every pipeline default is a named key here; command-line flags override
file values. Camera mode "fixed" draws views from the guidance provider's
registered cameras (the analytic oracle), "spherical" samples poses
randomly on the configured band.
"""

import copy
import json

from .errors import ConfigError

DEFAULTS = {
    "input": {"mesh": None, "prompt": ""},
    "stage1": {
        "iterations": 600,
        "lr_jacobians": 2e-3,
        "views_per_iteration": 12,
        "render_size": 64,
    },
    "texture": {
        "views": 10,
        "atlas_resolution": 512,
        "render_size": 512,
        "blend_exponent": 2.0,
        "depth_tol_scale": 1e-3,
        "ring_elevation_deg": 15.0,
        "cap_elevation_deg": 75.0,
    },
    "stage2": {
        "iterations": 400,
        "lr_jacobians": 2e-3,
        "lr_texels": 1e-2,
        "refiner_steps": 15,
        "render_size": 512,
    },
    "guidance": {
        "mode": "analytic",  # analytic | remote
        "directory": None,
        "url": None,
        "latent": {"h": 64, "w": 64, "c": 4},
        "sds": {
            "t_min": 0.02,
            "t_max": 0.98,
            "weight_mode": "one_minus_alpha_bar",
            "guidance_scale": 100.0,
        },
        "schedule": {"num_steps": 1000, "beta_start": 8.5e-4, "beta_end": 1.2e-2},
    },
    "cameras": {
        # fixed: provider-registered poses (analytic guidance); spherical:
        # random band sampling, the mode for model-backed guidance
        "mode": "fixed",
        "radius_scale": 2.5,
        "fov_deg": 45.0,
        "elevation_deg": [-15.0, 60.0],
    },
    "shading": {"ambient": 0.3, "diffuse": 0.7, "background": [0.0, 0.0, 0.0]},
    "output": {"dir": "out", "turntable_frames": 8, "turntable_size": 256},
    "seed": 0,
    "threads": None,
}


def _merge(base, override, path="config"):
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown key {path}.{key}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge(base[key], value, f"{path}.{key}")
        else:
            out[key] = copy.deepcopy(value)
    return out


def _require_positive(cfg, section, keys):
    for key in keys:
        value = cfg[section][key]
        if not isinstance(value, (int, float)) or value <= 0:
            raise ConfigError(f"{section}.{key} must be positive, got {value!r}")


def validate(cfg: dict) -> dict:
    _require_positive(cfg, "stage1", ["iterations", "lr_jacobians", "views_per_iteration",
                                     "render_size"])
    _require_positive(cfg, "texture", ["views", "atlas_resolution", "render_size"])
    _require_positive(cfg, "stage2", ["iterations", "lr_jacobians", "lr_texels",
                                      "refiner_steps", "render_size"])
    if cfg["guidance"]["mode"] not in ("analytic", "remote"):
        raise ConfigError(f"guidance.mode must be analytic or remote, got "
                          f"{cfg['guidance']['mode']!r}")
    if cfg["cameras"]["mode"] not in ("fixed", "spherical"):
        raise ConfigError(f"cameras.mode must be fixed or spherical, got "
                          f"{cfg['cameras']['mode']!r}")
    if cfg["guidance"]["mode"] == "analytic" and cfg["cameras"]["mode"] != "fixed":
        raise ConfigError(
            "analytic guidance holds per-camera targets; set cameras.mode=fixed"
        )
    lo, hi = cfg["cameras"]["elevation_deg"]
    if lo > hi:
        raise ConfigError(f"empty camera elevation band [{lo}, {hi}]")
    return cfg


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Merge DEFAULTS <- file <- overrides, then validate."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        cfg = _merge(cfg, data)
    if overrides:
        cfg = _merge(cfg, overrides)
    return validate(cfg)
