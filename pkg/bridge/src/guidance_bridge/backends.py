"""Guidance backends the HTTP layer dispatches to.

mock: deterministic stand-ins (noise-replay denoiser, identity refiner,
constant inpainter, depth-echo) for protocol conformance in CI.
analytic: per-view targets from a fixture directory; bit-identical to the
engine's in-process oracle.
real: wraps pretrained diffusion pipelines when the optional dependencies
and weights are available.
"""

import json
import os
import threading

import numpy as np

from . import numerics

CAPABILITIES = ("denoise", "depthToImage", "inpaint", "refine")


class BackendError(ValueError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(message)


class MockBackend:
    """Byte-deterministic mocks, seeded.

    The denoiser replays the client's noise stream: it draws one timestep
    (discarded) and one standard-normal tensor from a generator seeded like
    the client's, so eps_hat equals the client's eps bit-exactly when the
    client uses the default timestep bounds and one draw per request.
    """

    def __init__(self, seed: int = 0, latent=(64, 64, 4), t_bounds=(20, 980)):
        self.seed = int(seed)
        self.latent = tuple(latent)
        self.t_bounds = t_bounds
        self._rng = np.random.default_rng([self.seed])
        self._lock = threading.Lock()

    capabilities = list(CAPABILITIES)
    cameras = None

    def denoise(self, latent, t, prompt, guidance_scale, view=None):
        with self._lock:
            self._rng.integers(self.t_bounds[0], self.t_bounds[1], endpoint=True)
            return self._rng.standard_normal(latent.shape, dtype=np.float32)

    def depth_to_image(self, depth, prompt, view=None):
        return np.repeat(np.asarray(depth, np.float32)[:, :, None], 3, axis=2)

    def inpaint(self, image, mask, depth, prompt, view=None):
        return numerics.composite_mask(image, mask, np.float32(0.5))

    def refine(self, image, prompt, steps, view=None):
        return np.asarray(image, np.float32)


class AnalyticBackend:
    """Serves stored per-view targets exactly like the engine's oracle."""

    capabilities = list(CAPABILITIES)

    def __init__(self, directory, latent=(64, 64, 4), schedule=None):
        self.latent = tuple(latent)
        self.alpha_bar = (
            schedule if schedule is not None else numerics.scaled_linear_alpha_bar()
        )
        with open(os.path.join(directory, "cameras.json"), "r", encoding="utf-8") as fh:
            self.cameras = json.load(fh)["cameras"]
        self.targets = [
            numerics.load_png_f32(os.path.join(directory, "targets", f"{i}.png"))
            for i in range(len(self.cameras))
        ]
        normals_dir = os.path.join(directory, "normals")
        if os.path.isdir(normals_dir):
            normal_images = [
                numerics.load_png_f32(os.path.join(normals_dir, f"{i}.png"))
                for i in range(len(self.cameras))
            ]
        else:
            normal_images = self.targets
        self.target_latents = [
            numerics.image_to_latent(img.astype(np.float64), self.latent)
            for img in normal_images
        ]

    def _view(self, view):
        if view is None or not (0 <= int(view) < len(self.targets)):
            raise BackendError("view", f"unknown camera {view!r}")
        return int(view)

    def denoise(self, latent, t, prompt, guidance_scale, view=None):
        v = self._view(view)
        z = self.target_latents[v]
        if latent.shape != z.shape:
            raise BackendError("latent", f"shape {latent.shape} != {z.shape}")
        return numerics.invert_noise_against_target(latent, z, self.alpha_bar[int(t)])

    def depth_to_image(self, depth, prompt, view=None):
        return self.targets[self._view(view)].copy()

    def inpaint(self, image, mask, depth, prompt, view=None):
        target = self.targets[self._view(view)]
        return numerics.composite_mask(image, mask, target)

    def refine(self, image, prompt, steps, view=None):
        return self.targets[self._view(view)].copy()


class RealBackend:
    """Pretrained diffusion pipelines behind the same interface.

    Models load lazily; classifier-free guidance and scheduler internals
    stay on this side of the wire. Requires the `real` extra plus local
    weights, so it is exercised only in model-equipped deployments.
    """

    cameras = None

    def __init__(self, model_ids: dict, device: str = "cpu", dtype: str = "float32",
                 latent=(64, 64, 4)):
        try:
            import torch
            from diffusers import (
                AutoPipelineForImage2Image,
                AutoPipelineForInpainting,
                StableDiffusionDepth2ImgPipeline,
                StableDiffusionPipeline,
            )
        except ImportError as exc:  # pragma: no cover - optional dependency
            raise RuntimeError(
                "real mode needs the optional dependencies: pip install "
                "'guidance-bridge[real]'"
            ) from exc
        self._torch = torch
        self.device = device
        self.dtype = getattr(torch, dtype)
        self.latent = tuple(latent)
        self.capabilities = []
        self._pipes = {}
        loaders = {
            "denoise": ("denoiser", StableDiffusionPipeline),
            "depthToImage": ("depth2img", StableDiffusionDepth2ImgPipeline),
            "inpaint": ("inpaint", AutoPipelineForInpainting),
            "refine": ("refiner", AutoPipelineForImage2Image),
        }
        for capability, (key, cls) in loaders.items():
            model_id = model_ids.get(key)
            if not model_id:
                continue
            pipe = cls.from_pretrained(model_id, torch_dtype=self.dtype)
            self._pipes[capability] = pipe.to(device)
            self.capabilities.append(capability)

    def _image_from(self, array):
        from PIL import Image

        data = np.clip(np.asarray(array, np.float64), 0.0, 1.0)
        return Image.fromarray(np.rint(data * 255.0).astype(np.uint8))

    def _to_array(self, image):
        return np.asarray(image, dtype=np.float32) / np.float32(255.0)

    def denoise(self, latent, t, prompt, guidance_scale, view=None):
        torch = self._torch
        pipe = self._pipes["denoise"]
        unet, encoder, tokenizer = pipe.unet, pipe.text_encoder, pipe.tokenizer
        with torch.no_grad():
            tokens = tokenizer([prompt, ""], padding="max_length",
                               max_length=tokenizer.model_max_length,
                               truncation=True, return_tensors="pt")
            embeds = encoder(tokens.input_ids.to(self.device))[0]
            x = torch.from_numpy(np.ascontiguousarray(latent)).to(self.device, self.dtype)
            x = x.permute(2, 0, 1)[None].repeat(2, 1, 1, 1)
            ts = torch.tensor([int(t), int(t)], device=self.device)
            noise = unet(x, ts, encoder_hidden_states=embeds).sample
            cond, uncond = noise[0], noise[1]
            guided = uncond + float(guidance_scale) * (cond - uncond)
        return guided.permute(1, 2, 0).float().cpu().numpy()

    def depth_to_image(self, depth, prompt, view=None):
        pipe = self._pipes["depthToImage"]
        torch = self._torch
        d = torch.from_numpy(np.ascontiguousarray(depth, np.float32))[None]
        out = pipe(prompt=prompt, image=self._image_from(np.repeat(
            depth[:, :, None], 3, axis=2)), depth_map=d).images[0]
        return self._to_array(out)

    def inpaint(self, image, mask, depth, prompt, view=None):
        pipe = self._pipes["inpaint"]
        out = pipe(prompt=prompt, image=self._image_from(image),
                   mask_image=self._image_from(np.repeat(
                       np.asarray(mask, np.float32)[:, :, None], 3, axis=2))).images[0]
        return self._to_array(out)

    def refine(self, image, prompt, steps, view=None):
        pipe = self._pipes["refine"]
        out = pipe(prompt=prompt, image=self._image_from(image),
                   num_inference_steps=int(steps)).images[0]
        return self._to_array(out)
