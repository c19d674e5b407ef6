"""Two-stage coarse-to-fine orchestration.

Stage I deforms the base mesh by SDS on rendered normal maps and paints a
texture atlas through the tuning-free multi-view loop. Stage II composes a
fresh Jacobian field over the frozen coarse mesh and jointly optimizes it
with the texel grid against the refiner MSE loss.

All randomness derives from one seed through per-purpose substreams keyed
by (seed, stream, iteration, view), so per-view draws are independent of
thread count and of how many views run per iteration. Per-view gradients
are reduced in schedule order, which keeps runs bit-identical.
"""

import hashlib
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import obj_io
from .camera import Camera, CameraConfig, ring_cameras, sample_camera
from .config import load_config
from .errors import ConfigError, GuidanceError, PipelineError
from .guidance import (
    CAP_DENOISE,
    CAP_REFINE,
    AnalyticOracle,
    LatentMapper,
    NoiseSchedule,
    RemoteProvider,
    SdsConfig,
    add_noise,
    predicted_clean_latent,
    sds_weight,
    timestep_bounds,
)
from .mesh import Mesh
from .optim import Adam
from .poisson import JacobianField, PoissonSolver, build_solver
from .render.backprop import backprop_pixels
from .render.buffers import dump_array, load_array, save_image_png
from .render.raster import rasterize
from .render.shading import ShadingConfig, shade_textured
from .texture import TextureAtlas, ViewSchedule, generate_atlas, paint

log = logging.getLogger("meshforge")

# substream tags for per-purpose generators
_STREAM_CAMERA = 1
_STREAM_SDS = 2
_STREAM_STAGE2 = 3


def substream(seed: int, stream: int, iteration: int = 0, view: int = 0) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(stream), int(iteration), int(view)])


@dataclass
class StageResult:
    mesh: Mesh
    jacobians: JacobianField | None
    loss_history: list
    seconds: float


def _smoothed(history, window: int = 10):
    h = np.asarray(history, dtype=np.float64)
    if len(h) < window:
        return h
    kernel = np.ones(window) / window
    return np.convolve(h, kernel, mode="valid")


def _schedule_from_config(gcfg: dict) -> NoiseSchedule:
    s = gcfg["schedule"]
    return NoiseSchedule.scaled_linear(s["num_steps"], s["beta_start"], s["beta_end"])


def _sds_from_config(gcfg: dict) -> SdsConfig:
    s = gcfg["sds"]
    return SdsConfig(
        t_min=s["t_min"],
        t_max=s["t_max"],
        weight_mode=s["weight_mode"],
        guidance_scale=s["guidance_scale"],
    )


def make_provider(cfg: dict, schedule: NoiseSchedule):
    gcfg = cfg["guidance"]
    latent = (gcfg["latent"]["h"], gcfg["latent"]["w"], gcfg["latent"]["c"])
    if gcfg["mode"] == "analytic":
        if not gcfg["directory"]:
            raise ConfigError("guidance.mode=analytic requires guidance.directory")
        return AnalyticOracle.from_directory(gcfg["directory"], schedule, latent)
    if not gcfg["url"]:
        raise ConfigError("guidance.mode=remote requires guidance.url")
    return RemoteProvider(gcfg["url"])


def _shading_from_config(cfg: dict) -> ShadingConfig:
    s = cfg["shading"]
    return ShadingConfig(
        ambient=s["ambient"], diffuse=s["diffuse"], background=tuple(s["background"])
    )


def _camera_config(cfg: dict, mesh: Mesh, size: int) -> CameraConfig:
    c = cfg["cameras"]
    lo, hi = c["elevation_deg"]
    return CameraConfig(
        elevation_range=(np.deg2rad(lo), np.deg2rad(hi)),
        radius=c["radius_scale"] * mesh.bounding_radius,
        fov_y=np.deg2rad(c["fov_deg"]),
        width=size,
        height=size,
        look_at=tuple(mesh.centroid),
    )


def _iteration_views(cfg, provider, mesh, size, seed, iteration, count):
    """(camera, view_id) pairs for one iteration.

    Fixed mode rotates through the provider's registered cameras so every
    target participates; spherical mode samples fresh poses per view.
    """
    if cfg["cameras"]["mode"] == "fixed":
        cams = getattr(provider, "cameras", None)
        if not cams:
            raise ConfigError("cameras.mode=fixed requires a provider with registered cameras")
        n = len(cams)
        offset = (iteration * count) % n
        return [(cams[(offset + k) % n], (offset + k) % n) for k in range(count)]
    cam_cfg = _camera_config(cfg, mesh, size)
    out = []
    for k in range(count):
        rng = substream(seed, _STREAM_CAMERA, iteration, k)
        out.append((sample_camera(rng, cam_cfg), None))
    return out


def _check_finite(arr, what, diagnostics):
    if not np.isfinite(arr).all():
        raise PipelineError(f"non-finite values in {what}", diagnostics)


# ---------------------------------------------------------------------------
# stage I: deformation


def stage1_view_pass(base_mesh, vertices, camera, view_id, provider, prompt,
                     sds_cfg, schedule, mapper, rng, frozen_t=None):
    """Render one view, run SDS on the normal-map latent, backprop to vertices.

    Returns (grad_vertices, loss) where the loss is the predicted-clean-
    latent MSE (timestep-independent under the analytic oracle). With
    frozen_t the draw is deterministic and eps is zero, which leaves the
    oracle's gradient unchanged (the noise cancels exactly in eps_hat - eps).
    """
    buffers = rasterize(base_mesh.with_vertices(vertices), camera)
    latent = mapper.forward(buffers.normal)
    x = np.asarray(latent, dtype=np.float32)
    if frozen_t is None:
        t_lo, t_hi = timestep_bounds(sds_cfg, schedule)
        t = int(rng.integers(t_lo, t_hi, endpoint=True))
        eps = rng.standard_normal(x.shape, dtype=np.float32)
    else:
        t = int(frozen_t)
        eps = np.zeros_like(x)
    x_t = add_noise(x, t, eps, schedule)
    eps_hat = np.asarray(
        provider.denoise(x_t, prompt, t, sds_cfg.guidance_scale, view=view_id),
        dtype=np.float32,
    )
    weight = np.float32(sds_weight(t, sds_cfg, schedule))
    residual = eps_hat - eps
    # float32 noise gate: a provider that echoes the injected noise (perfect
    # denoiser, or the analytic oracle at its fixed point) differs from eps
    # only by round-off, which Adam would otherwise amplify to full steps
    noise_floor = 8.0 * np.finfo(np.float32).eps * (1.0 + float(np.abs(x_t).max()))
    if float(np.abs(residual).max()) <= noise_floor:
        residual = np.zeros_like(residual)
    grad_latent = (weight * residual).astype(np.float64)
    grad_image = mapper.adjoint(grad_latent)
    grad_vertices, _ = backprop_pixels(buffers, grad_normal=grad_image)
    x0 = predicted_clean_latent(x_t, eps_hat, t, schedule)
    loss = float(np.mean((x.astype(np.float64) - x0.astype(np.float64)) ** 2))
    return grad_vertices, loss


def stage1_iteration_grad(solver: PoissonSolver, jacobians: JacobianField, views,
                          provider, prompt, sds_cfg, schedule, mapper,
                          rngs=None, frozen_ts=None, threads=1):
    """Averaged per-view Jacobian gradient for one iteration state."""
    vertices = solver.solve_positions(jacobians)

    def run(idx):
        camera, view_id = views[idx]
        rng = rngs[idx] if rngs is not None else None
        frozen = frozen_ts[idx] if frozen_ts is not None else None
        return stage1_view_pass(
            solver.mesh, vertices, camera, view_id, provider, prompt,
            sds_cfg, schedule, mapper, rng, frozen_t=frozen,
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, range(len(views))))
    else:
        results = [run(i) for i in range(len(views))]
    grad_v = np.zeros_like(vertices)
    losses = []
    for idx, (gv, loss) in enumerate(results):  # fixed reduction order
        if not np.isfinite(gv).all():
            camera, view_id = views[idx]
            raise PipelineError(
                "non-finite per-view vertex gradient",
                {"view": idx, "view_id": view_id,
                 "camera": {"azimuth": camera.azimuth, "elevation": camera.elevation}},
            )
        grad_v += gv
        losses.append(loss)
    grad_v /= len(views)
    return solver.solve_adjoint(grad_v), losses, vertices


def stage1_deform(mesh: Mesh, prompt: str, provider, cfg: dict,
                  threads: int = 1) -> StageResult:
    """Coarse deformation: SDS on normal maps drives the Jacobian field."""
    provider.require(CAP_DENOISE)
    start = time.time()
    s1 = cfg["stage1"]
    schedule = _schedule_from_config(cfg["guidance"])
    sds_cfg = _sds_from_config(cfg["guidance"])
    solver = build_solver(mesh)
    jacobians = JacobianField.identity(mesh.n_faces)
    adam = Adam(lr=s1["lr_jacobians"])
    seed = cfg["seed"]
    history = []

    size_probe = _iteration_views(cfg, provider, mesh, s1["render_size"], seed, 0,
                                  s1["views_per_iteration"])
    cam0 = size_probe[0][0]
    mapper = LatentMapper(cam0.height, cam0.width, provider.latent_spec)

    for it in range(s1["iterations"]):
        views = _iteration_views(cfg, provider, mesh, s1["render_size"], seed, it,
                                 s1["views_per_iteration"])
        rngs = [substream(seed, _STREAM_SDS, it, k) for k in range(len(views))]
        try:
            grad_j, losses, _ = stage1_iteration_grad(
                solver, jacobians, views, provider, prompt, sds_cfg, schedule, mapper,
                rngs=rngs, threads=threads,
            )
        except PipelineError as exc:
            exc.diagnostics.update({"iteration": it, "stage": "stage1"})
            raise
        _check_finite(grad_j, "jacobian gradient",
                      {"iteration": it, "stage": "stage1"})
        adam.step(jacobians.matrices, grad_j)
        history.append(float(np.mean(losses)))
        if it % 50 == 0:
            log.info("stage1 iteration %d loss %.6g", it, history[-1])

    final_vertices = solver.solve_positions(jacobians)
    coarse = mesh.with_vertices(final_vertices)
    return StageResult(coarse, jacobians, history, time.time() - start)


# ---------------------------------------------------------------------------
# stage I: texturing


def texture_schedule(cfg: dict, mesh: Mesh, provider) -> ViewSchedule:
    if cfg["cameras"]["mode"] == "fixed" and getattr(provider, "cameras", None):
        cams = list(provider.cameras)
        return ViewSchedule(cameras=cams, view_ids=list(range(len(cams))))
    t = cfg["texture"]
    cams = ring_cameras(
        t["views"],
        cfg["cameras"]["radius_scale"] * mesh.bounding_radius,
        elevation=np.deg2rad(t["ring_elevation_deg"]),
        cap_elevation=np.deg2rad(t["cap_elevation_deg"]),
        fov_y=np.deg2rad(cfg["cameras"]["fov_deg"]),
        width=t["render_size"],
        height=t["render_size"],
        look_at=tuple(mesh.centroid),
    )
    return ViewSchedule(cameras=cams, view_ids=[None] * len(cams))


def stage1_texture(mesh: Mesh, prompt: str, provider, cfg: dict,
                   uvs: np.ndarray | None = None,
                   checkpoint_dir=None) -> tuple[TextureAtlas, float]:
    """Paint the coarse atlas over the configured view schedule."""
    t = cfg["texture"]
    atlas = generate_atlas(mesh, t["atlas_resolution"], uvs=uvs)
    schedule = texture_schedule(cfg, mesh, provider)
    coverage = paint(
        mesh, atlas, schedule, provider, prompt,
        shading=_shading_from_config(cfg),
        depth_tol=t["depth_tol_scale"] * mesh.bounding_radius,
        exponent=t["blend_exponent"],
        checkpoint_dir=checkpoint_dir,
    )
    log.info("texture coverage %.3f", coverage)
    return atlas, coverage


# ---------------------------------------------------------------------------
# stage II: joint refinement


def stage2_refine(mesh: Mesh, atlas: TextureAtlas, prompt: str, provider,
                  cfg: dict) -> tuple[StageResult, TextureAtlas]:
    """Jointly optimize a fresh Jacobian field over the coarse mesh and the texels.

    The refined image is a constant target each iteration; its MSE against
    the current render drives Adam steps on Jacobians and texels. Texels are
    clamped to [0, 1] after every step. The coarse mesh is never mutated.
    """
    provider.require(CAP_REFINE)
    start = time.time()
    s2 = cfg["stage2"]
    solver = build_solver(mesh)
    jacobians = JacobianField.identity(mesh.n_faces)
    adam_j = Adam(lr=s2["lr_jacobians"])
    adam_t = Adam(lr=s2["lr_texels"])
    shading = _shading_from_config(cfg)
    seed = cfg["seed"]
    history = []
    failures = 0

    for it in range(s2["iterations"]):
        if cfg["cameras"]["mode"] == "fixed":
            # round-robin over the registered cameras: every target
            # participates once per cycle, keeping the windowed loss stable
            cams = provider.cameras
            idx = it % len(cams)
            camera, view_id = cams[idx], idx
        else:
            rng = substream(seed, _STREAM_STAGE2, it)
            cam_cfg = _camera_config(cfg, mesh, s2["render_size"])
            camera, view_id = sample_camera(rng, cam_cfg), None
        vertices = solver.solve_positions(jacobians)
        buffers = rasterize(mesh.with_vertices(vertices), camera)
        image = shade_textured(buffers, atlas.uvs, atlas.texels, shading)
        image32 = np.asarray(image, dtype=np.float32)
        try:
            refined = provider.refine(image32, prompt, s2["refiner_steps"], view=view_id)
        except GuidanceError as exc:
            failures += 1
            log.warning("stage2 iteration %d refiner failure (%s), skipping", it, exc)
            if failures >= 10:
                raise PipelineError(
                    "10 consecutive refiner failures",
                    {"iteration": it, "stage": "stage2"},
                ) from exc
            history.append(history[-1] if history else float("nan"))
            continue
        failures = 0
        refined = np.asarray(refined, dtype=np.float64)
        if refined.shape != image.shape:
            raise PipelineError(
                f"refiner returned shape {refined.shape}, expected {image.shape}",
                {"iteration": it},
            )
        # residual against the exact image the refiner saw (the f32 cast is
        # treated as identity in the gradient)
        diff = image32.astype(np.float64) - refined
        loss = float(np.sum(diff * diff))
        grad_pixels = 2.0 * diff
        grad_v, grad_t = backprop_pixels(
            buffers, uvs=atlas.uvs, texels=atlas.texels,
            grad_color=grad_pixels, shading=shading,
        )
        grad_j = solver.solve_adjoint(grad_v)
        diagnostics = {"iteration": it, "stage": "stage2",
                       "camera": {"azimuth": camera.azimuth, "elevation": camera.elevation}}
        _check_finite(grad_j, "jacobian gradient", diagnostics)
        _check_finite(grad_t, "texel gradient", diagnostics)
        adam_j.step(jacobians.matrices, grad_j)
        adam_t.step(atlas.texels, grad_t)
        np.clip(atlas.texels, 0.0, 1.0, out=atlas.texels)
        _check_finite(atlas.texels, "texels", diagnostics)
        history.append(loss)
        if it % 50 == 0:
            log.info("stage2 iteration %d loss %.6g", it, loss)

    final = mesh.with_vertices(solver.solve_positions(jacobians))
    return StageResult(final, jacobians, history, time.time() - start), atlas


# ---------------------------------------------------------------------------
# full run


def render_turntable(mesh: Mesh, atlas: TextureAtlas, frames: int, size: int,
                     shading: ShadingConfig, radius_scale: float = 2.5,
                     fov_deg: float = 45.0) -> np.ndarray:
    """Horizontal strip of shaded views around the object."""
    cams = [
        Camera(
            azimuth=2.0 * np.pi * k / frames,
            elevation=np.deg2rad(20.0),
            radius=radius_scale * mesh.bounding_radius,
            fov_y=np.deg2rad(fov_deg),
            width=size,
            height=size,
            look_at=tuple(mesh.centroid),
        )
        for k in range(frames)
    ]
    strips = []
    for cam in cams:
        buffers = rasterize(mesh, cam)
        strips.append(shade_textured(buffers, atlas.uvs, atlas.texels, shading))
    return np.concatenate(strips, axis=1)


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        digest.update(fh.read())
    return digest.hexdigest()


def run_full(config, provider=None, threads: int = 1) -> dict:
    """Execute stage I deformation, texturing, and stage II refinement.

    config is a path or a dict (merged over defaults by the caller).
    Writes final OBJ/MTL/PNG, per-stage checkpoints, a turntable strip, and
    report.json into output.dir; returns the report. Existing stage
    checkpoints (''.done'' markers) are reused bit-identically.
    """
    cfg = load_config(config) if isinstance(config, (str, os.PathLike)) else config
    out_dir = cfg["output"]["dir"]
    ckpt = os.path.join(out_dir, "checkpoints")
    os.makedirs(ckpt, exist_ok=True)
    schedule = _schedule_from_config(cfg["guidance"])
    if provider is None:
        provider = make_provider(cfg, schedule)
    if not cfg["input"]["mesh"]:
        raise ConfigError("input.mesh is required")
    loaded = obj_io.load_mesh(cfg["input"]["mesh"])
    base = loaded.mesh
    prompt = cfg["input"]["prompt"]
    shading = _shading_from_config(cfg)
    report = {"config": cfg, "stages": {}}

    stage1_done = os.path.join(ckpt, "stage1.done")
    if os.path.exists(stage1_done):
        coarse = base.with_vertices(load_array(os.path.join(ckpt, "stage1_vertices.npy")))
        report["stages"]["stage1"] = {"resumed": True}
        log.info("stage1 checkpoint found, skipping deformation")
    else:
        result = stage1_deform(base, prompt, provider, cfg, threads=threads)
        coarse = result.mesh
        dump_array(os.path.join(ckpt, "stage1_vertices.npy"), coarse.vertices)
        with open(os.path.join(ckpt, "stage1_jacobians.bin"), "wb") as fh:
            fh.write(result.jacobians.to_blob())
        obj_io.save_mesh(coarse, os.path.join(out_dir, "coarse.obj"))
        with open(stage1_done, "w", encoding="utf-8") as fh:
            fh.write("ok\n")
        report["stages"]["stage1"] = {
            "resumed": False,
            "iterations": cfg["stage1"]["iterations"],
            "final_loss": result.loss_history[-1] if result.loss_history else None,
            "seconds": result.seconds,
        }

    texture_done = os.path.join(ckpt, "texture.done")
    atlas_dir = os.path.join(ckpt, "atlas")
    if os.path.exists(texture_done):
        atlas = TextureAtlas.load(atlas_dir)
        report["stages"]["texture"] = {"resumed": True, "coverage": atlas.coverage()}
        log.info("texture checkpoint found, skipping painting")
    else:
        t0 = time.time()
        atlas, coverage = stage1_texture(coarse, prompt, provider, cfg,
                                         uvs=loaded.uvs, checkpoint_dir=atlas_dir)
        atlas.save(atlas_dir)
        with open(texture_done, "w", encoding="utf-8") as fh:
            fh.write("ok\n")
        report["stages"]["texture"] = {
            "resumed": False,
            "coverage": coverage,
            "seconds": time.time() - t0,
        }

    result2, atlas = stage2_refine(coarse, atlas, prompt, provider, cfg)
    final = result2.mesh
    dump_array(os.path.join(ckpt, "stage2_vertices.npy"), final.vertices)
    report["stages"]["stage2"] = {
        "iterations": cfg["stage2"]["iterations"],
        "final_loss": result2.loss_history[-1] if result2.loss_history else None,
        "seconds": result2.seconds,
    }

    final_obj = os.path.join(out_dir, "final.obj")
    obj_io.save_mesh(final, final_obj, uvs=atlas.uvs, texture=atlas.texels)
    strip = render_turntable(final, atlas, cfg["output"]["turntable_frames"],
                             cfg["output"]["turntable_size"], shading,
                             radius_scale=cfg["cameras"]["radius_scale"],
                             fov_deg=cfg["cameras"]["fov_deg"])
    save_image_png(os.path.join(out_dir, "turntable.png"), strip)

    outputs = {
        "final_obj": final_obj,
        "final_mtl": os.path.join(out_dir, "final.mtl"),
        "final_png": os.path.join(out_dir, "final.png"),
        "turntable": os.path.join(out_dir, "turntable.png"),
    }
    report["outputs"] = {k: {"path": v, "sha256": _sha256(v)} for k, v in outputs.items()}
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, default=str)
    return report
