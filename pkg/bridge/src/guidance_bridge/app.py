"""HTTP layer implementing the guidance wire protocol.

GET  /capabilities -> {"capabilities": [...], "latent": {"h","w","c"}}
POST /denoise      {"latent": T, "t": int, "prompt": str, "guidance_scale": float}
POST /depth2img    {"depth": T, "prompt": str}
POST /inpaint      {"image": T, "mask": T, "depth": T|null, "prompt": str}
POST /refine       {"image": T, "prompt": str, "steps": int}

T = {"shape": [...], "dtype": "f32", "data": base64 little-endian bytes}.
Requests may carry an optional integer "view" naming a registered camera
(analytic fixtures); model-backed backends ignore it. Errors: 400 malformed
field, 413 oversized tensor, 429 above the concurrency limit, 500 backend
failure, each as {"error": str}.
"""

import threading
from dataclasses import dataclass, field

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import tensors
from .backends import BackendError


@dataclass
class BridgeConfig:
    mode: str = "mock"  # mock | analytic | real
    seed: int = 0
    directory: str | None = None
    model_ids: dict = field(default_factory=dict)
    device: str = "cpu"
    latent: tuple = (64, 64, 4)
    max_concurrent: int = 4
    max_pixels: int = 4 * 1024 * 1024  # per-tensor element limit
    mock_delay_s: float = 0.0  # test hook for the concurrency limiter

    def __post_init__(self):
        if self.max_concurrent < 1:
            raise ValueError("max_concurrent must be >= 1")


def make_backend(config: BridgeConfig):
    if config.mode == "mock":
        from .backends import MockBackend

        return MockBackend(seed=config.seed, latent=config.latent)
    if config.mode == "analytic":
        from .backends import AnalyticBackend

        if not config.directory:
            raise ValueError("analytic mode requires a fixture directory")
        return AnalyticBackend(config.directory, latent=config.latent)
    if config.mode == "real":
        from .backends import RealBackend

        return RealBackend(config.model_ids, device=config.device,
                           latent=config.latent)
    raise ValueError(f"unknown mode {config.mode!r}")


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse({"error": message}, status_code=status)


def create_app(config: BridgeConfig | None = None) -> FastAPI:
    config = config or BridgeConfig()
    backend = make_backend(config)
    app = FastAPI(title="guidance-bridge")
    slots = threading.Semaphore(config.max_concurrent)

    class _Oversize(Exception):
        def __init__(self, name, size):
            self.name = name
            self.size = size

    def check_size(arr, name):
        if arr.size > config.max_pixels:
            raise _Oversize(name, arr.size)

    def tensor_field(body, name, optional=False):
        if name not in body or body[name] is None:
            if optional:
                return None
            raise tensors.TensorError(name, "missing")
        arr = tensors.decode(body[name], name)
        check_size(arr, name)
        return arr

    def scalar_field(body, name, kind, optional=False, default=None):
        if name not in body or body[name] is None:
            if optional:
                return default
            raise tensors.TensorError(name, "missing")
        try:
            return kind(body[name])
        except (TypeError, ValueError):
            raise tensors.TensorError(name, f"expected {kind.__name__}") from None

    def guarded(handler):
        async def run(request: Request):
            if not slots.acquire(blocking=False):
                return _error(429, "concurrency limit reached")
            try:
                if config.mock_delay_s:
                    import time

                    time.sleep(config.mock_delay_s)
                try:
                    body = await request.json()
                except Exception:
                    return _error(400, "body is not valid JSON")
                if not isinstance(body, dict):
                    return _error(400, "body must be a JSON object")
                try:
                    return handler(body)
                except tensors.TensorError as exc:
                    return _error(400, str(exc))
                except BackendError as exc:
                    return _error(400, f"{exc.field}: {exc}")
                except _Oversize as exc:
                    return _error(413, f"{exc.name}: {exc.size} elements exceeds "
                                       f"{config.max_pixels}")
                except Exception as exc:  # noqa: BLE001 - wire boundary
                    return _error(500, f"backend failure: {exc}")
            finally:
                slots.release()

        return run

    @app.get("/capabilities")
    def capabilities():
        h, w, c = backend.latent if hasattr(backend, "latent") else config.latent
        payload = {
            "capabilities": list(backend.capabilities),
            "latent": {"h": h, "w": w, "c": c},
        }
        if getattr(backend, "cameras", None):
            payload["cameras"] = backend.cameras
        return payload

    def handle_denoise(body):
        latent = tensor_field(body, "latent")
        t = scalar_field(body, "t", int)
        prompt = scalar_field(body, "prompt", str, optional=True, default="")
        scale = scalar_field(body, "guidance_scale", float, optional=True, default=1.0)
        view = scalar_field(body, "view", int, optional=True)
        out = backend.denoise(latent, t, prompt, scale, view=view)
        return JSONResponse({"eps_hat": tensors.encode(out)})

    def handle_depth2img(body):
        depth = tensor_field(body, "depth")
        prompt = scalar_field(body, "prompt", str, optional=True, default="")
        view = scalar_field(body, "view", int, optional=True)
        out = backend.depth_to_image(depth, prompt, view=view)
        return JSONResponse({"image": tensors.encode(out)})

    def handle_inpaint(body):
        image = tensor_field(body, "image")
        mask = tensor_field(body, "mask")
        depth = tensor_field(body, "depth", optional=True)
        prompt = scalar_field(body, "prompt", str, optional=True, default="")
        view = scalar_field(body, "view", int, optional=True)
        out = backend.inpaint(image, mask, depth, prompt, view=view)
        return JSONResponse({"image": tensors.encode(out)})

    def handle_refine(body):
        image = tensor_field(body, "image")
        prompt = scalar_field(body, "prompt", str, optional=True, default="")
        steps = scalar_field(body, "steps", int, optional=True, default=15)
        view = scalar_field(body, "view", int, optional=True)
        out = backend.refine(image, prompt, steps, view=view)
        return JSONResponse({"image": tensors.encode(out)})

    app.post("/denoise")(guarded(handle_denoise))
    app.post("/depth2img")(guarded(handle_depth2img))
    app.post("/inpaint")(guarded(handle_inpaint))
    app.post("/refine")(guarded(handle_refine))
    return app
