"""Generative guidance: SDS gradients, latent mapping, and providers.

Providers expose up to four capabilities (denoise, depth_to_image, inpaint,
refine) behind one interface, so the optimization loops run unchanged
against the offline analytic oracle, an in-process mock, or a remote HTTP
bridge. Everything a provider touches is float32, matching the wire
encoding, which keeps in-process and remote runs bit-identical.
"""

import base64
import json
import os
import time
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import requests

from .errors import ConfigError, GuidanceError, ProtocolError

CAP_DENOISE = "denoise"
CAP_DEPTH2IMG = "depthToImage"
CAP_INPAINT = "inpaint"
CAP_REFINE = "refine"


# ---------------------------------------------------------------------------
# noise schedule and SDS


@dataclass(frozen=True)
class NoiseSchedule:
    """Strictly decreasing cumulative signal levels alpha_bar(t), t in [0, T)."""

    alpha_bar: np.ndarray

    def __post_init__(self):
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        object.__setattr__(self, "alpha_bar", ab)
        if ab.ndim != 1 or len(ab) < 2:
            raise ConfigError("alpha_bar must be a 1-D array with T >= 2")
        if not ((ab > 0.0).all() and (ab < 1.0).all()):
            raise ConfigError("alpha_bar values must lie in (0, 1)")
        if not (np.diff(ab) < 0.0).all():
            raise ConfigError("alpha_bar must be strictly decreasing")

    @property
    def num_steps(self) -> int:
        return len(self.alpha_bar)

    @classmethod
    def scaled_linear(cls, num_steps: int = 1000, beta_start: float = 8.5e-4,
                      beta_end: float = 1.2e-2) -> "NoiseSchedule":
        betas = np.linspace(np.sqrt(beta_start), np.sqrt(beta_end), num_steps) ** 2
        return cls(np.cumprod(1.0 - betas))


@dataclass(frozen=True)
class SdsConfig:
    t_min: float = 0.02
    t_max: float = 0.98
    weight_mode: str = "one_minus_alpha_bar"  # or "one"
    guidance_scale: float = 100.0

    def __post_init__(self):
        if not (0.0 < self.t_min < self.t_max < 1.0):
            raise ConfigError(f"need 0 < t_min < t_max < 1, got ({self.t_min}, {self.t_max})")
        if self.weight_mode not in ("one", "one_minus_alpha_bar"):
            raise ConfigError(f"unknown weight_mode {self.weight_mode!r}")
        if self.guidance_scale < 1.0:
            raise ConfigError("guidance_scale must be >= 1")


def add_noise(x: np.ndarray, t: int, eps: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """sqrt(alpha_bar_t) * x + sqrt(1 - alpha_bar_t) * eps."""
    x = np.asarray(x)
    eps = np.asarray(eps)
    if x.shape != eps.shape:
        raise ValueError(f"shape mismatch: x {x.shape} vs eps {eps.shape}")
    if not (0 <= t < schedule.num_steps):
        raise ValueError(f"timestep {t} outside [0, {schedule.num_steps})")
    ab = schedule.alpha_bar[t]
    a = x.dtype.type(np.sqrt(ab))
    b = x.dtype.type(np.sqrt(1.0 - ab))
    return a * x + b * eps


def sds_weight(t: int, config: SdsConfig, schedule: NoiseSchedule) -> float:
    if config.weight_mode == "one":
        return 1.0
    return float(1.0 - schedule.alpha_bar[t])


def timestep_bounds(config: SdsConfig, schedule: NoiseSchedule) -> tuple[int, int]:
    t_lo = int(round(config.t_min * schedule.num_steps))
    t_hi = min(int(round(config.t_max * schedule.num_steps)), schedule.num_steps - 1)
    return t_lo, t_hi


def sds_sample(x, prompt, provider, config: SdsConfig, rng: np.random.Generator,
               schedule: NoiseSchedule, view=None):
    """One SDS draw: returns (gradient, t, eps, eps_hat).

    Draw order is part of the contract: t first (integers over the inclusive
    timestep range), then eps (standard normal in x's dtype). The gradient
    is w(t) * (eps_hat - eps).
    """
    provider.require(CAP_DENOISE)
    x = np.asarray(x, dtype=np.float32)
    h, w, c = provider.latent_spec
    if x.shape != (h, w, c):
        raise ValueError(f"latent shape {x.shape} does not match provider spec {(h, w, c)}")
    t_lo, t_hi = timestep_bounds(config, schedule)
    t = int(rng.integers(t_lo, t_hi, endpoint=True))
    eps = rng.standard_normal(x.shape, dtype=x.dtype)
    x_t = add_noise(x, t, eps, schedule)
    eps_hat = np.asarray(
        provider.denoise(x_t, prompt, t, config.guidance_scale, view=view), dtype=x.dtype
    )
    if eps_hat.shape != x.shape:
        raise GuidanceError(f"provider returned eps_hat with shape {eps_hat.shape}")
    weight = x.dtype.type(sds_weight(t, config, schedule))
    return weight * (eps_hat - eps), t, eps, eps_hat


def sds_gradient(x, prompt, provider, config, rng, schedule, view=None):
    """Stochastic gradient of the score-distillation loss w.r.t. the latent."""
    grad, _, _, _ = sds_sample(x, prompt, provider, config, rng, schedule, view=view)
    return grad


def predicted_clean_latent(x_t, eps_hat, t: int, schedule: NoiseSchedule) -> np.ndarray:
    """Invert the noising step using the predicted noise."""
    ab = schedule.alpha_bar[t]
    x_t = np.asarray(x_t)
    a = x_t.dtype.type(np.sqrt(ab))
    b = x_t.dtype.type(np.sqrt(1.0 - ab))
    return (x_t - b * np.asarray(eps_hat, dtype=x_t.dtype)) / a


# ---------------------------------------------------------------------------
# image <-> latent mapping


def _overlap_weights(n_out: int, n_in: int) -> np.ndarray:
    """(n_out, n_in) area-average weights; rows sum to 1."""
    if n_out > n_in:
        raise ValueError(f"upsampling requested ({n_in} -> {n_out})")
    w = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for i in range(n_out):
        lo, hi = i * scale, (i + 1) * scale
        j0, j1 = int(np.floor(lo)), int(np.ceil(hi))
        for j in range(j0, min(j1, n_in)):
            w[i, j] = min(hi, j + 1) - max(lo, j)
    return w / scale


class LatentMapper:
    """Linear area-average downsample from image space to a latent spec.

    The mapping is linear, so the adjoint (used for backprop) is the exact
    transpose. A 4th latent channel, when the provider wants one, is a
    constant 0.5 pad whose gradient is dropped.
    """

    def __init__(self, image_height: int, image_width: int, latent_spec: tuple):
        self.image_shape = (image_height, image_width)
        self.latent_spec = tuple(latent_spec)
        h, w, c = self.latent_spec
        if c not in (3, 4):
            raise ConfigError(f"latent channel count must be 3 or 4, got {c}")
        self._rows = _overlap_weights(h, image_height)
        self._cols = _overlap_weights(w, image_width)

    def forward(self, image: np.ndarray) -> np.ndarray:
        """(H, W, 3) float64 image -> (h, w, c) float64 latent."""
        image = np.asarray(image, dtype=np.float64)
        if image.shape != (*self.image_shape, 3):
            raise ValueError(f"image shape {image.shape} != {(*self.image_shape, 3)}")
        tmp = np.tensordot(self._rows, image, axes=(1, 0))  # (h, W, c)
        down = np.transpose(np.tensordot(tmp, self._cols, axes=(1, 1)), (0, 2, 1))
        h, w, c = self.latent_spec
        if c == 4:
            pad = np.full((h, w, 1), 0.5)
            down = np.concatenate([down, pad], axis=2)
        return down

    def adjoint(self, grad_latent: np.ndarray) -> np.ndarray:
        """Transpose map: latent gradient -> image gradient."""
        g = np.asarray(grad_latent, dtype=np.float64)
        h, w, c = self.latent_spec
        if g.shape != (h, w, c):
            raise ValueError(f"latent gradient shape {g.shape} != {(h, w, c)}")
        g = g[:, :, :3]
        tmp = np.tensordot(self._rows, g, axes=(0, 0))  # (H, w, c)
        return np.transpose(np.tensordot(tmp, self._cols, axes=(1, 0)), (0, 2, 1))


# ---------------------------------------------------------------------------
# provider contract


class GuidanceProvider:
    """Source of per-pixel guidance. Subclasses declare their capabilities.

    The optional `view` argument identifies the camera for providers whose
    answers are view-dependent (the analytic oracle); model-backed providers
    ignore it.
    """

    capabilities: frozenset = frozenset()
    latent_spec: tuple = (64, 64, 4)

    def require(self, capability: str):
        if capability not in self.capabilities:
            raise GuidanceError(
                f"{type(self).__name__} does not declare capability {capability!r}"
            )

    def denoise(self, latent, prompt, t, guidance_scale, view=None):
        raise NotImplementedError

    def depth_to_image(self, depth, prompt, view=None):
        raise NotImplementedError

    def inpaint(self, image, mask, depth, prompt, view=None):
        raise NotImplementedError

    def refine(self, image, prompt, steps, view=None):
        raise NotImplementedError


class AnalyticOracle(GuidanceProvider):
    """Offline provider whose answers come from stored per-view targets.

    denoise inverts the noising equation against the view's target latent,
    so the SDS gradient is proportional to (render - target); depth_to_image
    and refine return the stored target image; inpaint composites the target
    into the generate mask. Inputs are quantized to float32 on entry, exactly
    like the wire protocol, so a loopback bridge serving the same targets is
    bit-identical.
    """

    capabilities = frozenset({CAP_DENOISE, CAP_DEPTH2IMG, CAP_INPAINT, CAP_REFINE})

    def __init__(self, cameras: list, targets: list, schedule: NoiseSchedule,
                 latent_spec: tuple = (64, 64, 4), normal_targets: list | None = None):
        if len(cameras) != len(targets):
            raise ConfigError("need exactly one target image per registered camera")
        if normal_targets is not None and len(normal_targets) != len(cameras):
            raise ConfigError("need exactly one normal target per registered camera")
        self.cameras = list(cameras)
        self.targets = [np.asarray(t, dtype=np.float32) for t in targets]
        # denoise keys off normal-map targets when given separately; image
        # targets serve depth_to_image / inpaint / refine
        self.normal_targets = (
            self.targets if normal_targets is None
            else [np.asarray(t, dtype=np.float32) for t in normal_targets]
        )
        for t in list(self.targets) + list(self.normal_targets):
            if t.ndim != 3 or t.shape[2] != 3:
                raise ConfigError(f"targets must be (H, W, 3), got {t.shape}")
        self.schedule = schedule
        self.latent_spec = tuple(latent_spec)

    def _target(self, view) -> np.ndarray:
        if view is None or not (0 <= int(view) < len(self.targets)):
            raise GuidanceError(f"unknown camera {view!r} (have {len(self.targets)})")
        return self.targets[int(view)]

    @cached_property
    def _target_latents(self) -> list:
        out = []
        for t in self.normal_targets:
            mapper = LatentMapper(t.shape[0], t.shape[1], self.latent_spec)
            out.append(np.asarray(mapper.forward(np.asarray(t, dtype=np.float64)),
                                  dtype=np.float32))
        return out

    def denoise(self, latent, prompt, t, guidance_scale, view=None):
        self._target(view)
        x_t = np.asarray(latent, dtype=np.float32)
        z = self._target_latents[int(view)]
        if x_t.shape != z.shape:
            raise GuidanceError(f"latent shape {x_t.shape} != target latent {z.shape}")
        ab = self.schedule.alpha_bar[int(t)]
        a = np.float32(np.sqrt(ab))
        b = np.float32(np.sqrt(1.0 - ab))
        return (x_t - a * z) / b

    def depth_to_image(self, depth, prompt, view=None):
        return self._target(view).copy()

    def inpaint(self, image, mask, depth, prompt, view=None):
        target = self._target(view)
        image = np.asarray(image, dtype=np.float32)
        m = np.asarray(mask, dtype=np.float32)
        if m.ndim == 2:
            m = m[:, :, None]
        return image * (np.float32(1.0) - m) + target * m

    def refine(self, image, prompt, steps, view=None):
        return self._target(view).copy()

    @classmethod
    def from_directory(cls, path, schedule: NoiseSchedule,
                       latent_spec: tuple = (64, 64, 4)) -> "AnalyticOracle":
        """Fixture directory: cameras.json + targets/<i>.png (+ normals/<i>.png).

        The optional normals/ set feeds denoise; without it the image
        targets serve every capability.
        """
        from PIL import Image

        def load_png(png):
            img = np.asarray(Image.open(png).convert("RGB"), dtype=np.float32)
            return img / np.float32(255.0)

        from .camera import camera_from_dict

        with open(os.path.join(path, "cameras.json"), "r", encoding="utf-8") as fh:
            spec = json.load(fh)["cameras"]
        cams = [camera_from_dict(c) for c in spec]
        targets = [load_png(os.path.join(path, "targets", f"{i}.png"))
                   for i in range(len(cams))]
        normals = None
        normals_dir = os.path.join(path, "normals")
        if os.path.isdir(normals_dir):
            normals = [load_png(os.path.join(normals_dir, f"{i}.png"))
                       for i in range(len(cams))]
        return cls(cams, targets, schedule, latent_spec, normal_targets=normals)


# ---------------------------------------------------------------------------
# wire protocol client


def encode_tensor(array: np.ndarray) -> dict:
    """Array -> {"shape", "dtype": "f32", "data": base64 LE row-major}."""
    arr = np.ascontiguousarray(array, dtype="<f4")
    return {
        "shape": list(arr.shape),
        "dtype": "f32",
        "data": base64.b64encode(arr.tobytes()).decode("ascii"),
    }


def decode_tensor(obj) -> np.ndarray:
    if not isinstance(obj, dict):
        raise ProtocolError(f"tensor must be an object, got {type(obj).__name__}")
    for key in ("shape", "dtype", "data"):
        if key not in obj:
            raise ProtocolError(f"tensor missing field {key!r}")
    if obj["dtype"] != "f32":
        raise ProtocolError(f"unsupported tensor dtype {obj['dtype']!r}")
    shape = tuple(int(s) for s in obj["shape"])
    raw = base64.b64decode(obj["data"])
    expected = int(np.prod(shape)) * 4
    if len(raw) != expected:
        raise ProtocolError(f"tensor data has {len(raw)} bytes, expected {expected}")
    return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)


class RemoteProvider(GuidanceProvider):
    """HTTP client for the guidance wire protocol.

    Performs a capability handshake at construction and retries idempotent
    requests with exponential backoff. Responses violating the protocol
    raise ProtocolError naming the offending field.
    """

    def __init__(self, endpoint: str, timeout_ms: int = 30000, retries: int = 3,
                 backoff_s: float = 0.1, session=None):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout_ms / 1000.0
        self.retries = int(retries)
        self.backoff_s = float(backoff_s)
        self.session = session or requests.Session()
        caps = self._request("GET", "/capabilities")
        if "capabilities" not in caps or "latent" not in caps:
            raise ProtocolError("capabilities response missing 'capabilities' or 'latent'")
        self.capabilities = frozenset(caps["capabilities"])
        latent = caps["latent"]
        try:
            self.latent_spec = (int(latent["h"]), int(latent["w"]), int(latent["c"]))
        except (KeyError, TypeError) as exc:
            raise ProtocolError(f"capabilities latent spec malformed: {exc}") from exc
        # analytic/offline bridges may advertise their registered poses,
        # making the remote a drop-in for fixed-camera runs
        from .camera import camera_from_dict

        self.cameras = (
            [camera_from_dict(c) for c in caps["cameras"]]
            if caps.get("cameras") else None
        )

    def _request(self, method: str, path: str, payload: dict | None = None) -> dict:
        url = self.endpoint + path
        last_error: Exception | None = None
        for attempt in range(self.retries):
            if attempt:
                time.sleep(self.backoff_s * 2 ** (attempt - 1))
            try:
                if method == "GET":
                    resp = self.session.get(url, timeout=self.timeout)
                else:
                    resp = self.session.post(url, json=payload, timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = GuidanceError(f"{method} {url} failed: {exc}")
                continue
            if resp.status_code >= 500:
                last_error = GuidanceError(
                    f"{method} {url} returned HTTP {resp.status_code}"
                )
                continue
            if resp.status_code >= 400:
                detail = ""
                try:
                    detail = resp.json().get("error", "")
                except ValueError:
                    pass
                raise GuidanceError(f"{method} {url} HTTP {resp.status_code}: {detail}")
            try:
                return resp.json()
            except ValueError as exc:
                raise ProtocolError(f"{url} returned non-JSON body") from exc
        raise last_error if last_error else GuidanceError(f"{method} {url} failed")

    def _tensor_field(self, body: dict, name: str) -> np.ndarray:
        if name not in body:
            raise ProtocolError(f"response missing field {name!r}")
        return decode_tensor(body[name])

    def denoise(self, latent, prompt, t, guidance_scale, view=None):
        self.require(CAP_DENOISE)
        payload = {
            "latent": encode_tensor(latent),
            "t": int(t),
            "prompt": str(prompt),
            "guidance_scale": float(guidance_scale),
        }
        if view is not None:
            payload["view"] = int(view)
        return self._tensor_field(self._request("POST", "/denoise", payload), "eps_hat")

    def depth_to_image(self, depth, prompt, view=None):
        self.require(CAP_DEPTH2IMG)
        payload = {"depth": encode_tensor(depth), "prompt": str(prompt)}
        if view is not None:
            payload["view"] = int(view)
        return self._tensor_field(self._request("POST", "/depth2img", payload), "image")

    def inpaint(self, image, mask, depth, prompt, view=None):
        self.require(CAP_INPAINT)
        payload = {
            "image": encode_tensor(image),
            "mask": encode_tensor(np.asarray(mask, dtype=np.float32)),
            "depth": None if depth is None else encode_tensor(depth),
            "prompt": str(prompt),
        }
        if view is not None:
            payload["view"] = int(view)
        return self._tensor_field(self._request("POST", "/inpaint", payload), "image")

    def refine(self, image, prompt, steps, view=None):
        self.require(CAP_REFINE)
        payload = {
            "image": encode_tensor(image),
            "prompt": str(prompt),
            "steps": int(steps),
        }
        if view is not None:
            payload["view"] = int(view)
        return self._tensor_field(self._request("POST", "/refine", payload), "image")
