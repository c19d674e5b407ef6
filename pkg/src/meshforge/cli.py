"""Command-line front end: stages, full runs, and inspection utilities.

stdout carries only machine-readable JSON; human logs go to stderr. Exit
codes: 0 success, 1 usage error, 2 runtime failure (partial outputs are
left on disk).
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import obj_io, pipeline
from .config import load_config
from .errors import ConfigError
from .render.buffers import save_image_png
from .render.shading import ShadingConfig
from .texture import TextureAtlas, generate_atlas


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="meshforge", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    def common(p, needs_config: bool):
        p.add_argument("--config", required=needs_config, help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--guidance", default=None,
                       help="analytic:DIR or remote:URL (overrides config)")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
        p.add_argument("--verbose", action="store_true")

    for name in ("deform", "texture", "refine", "run"):
        common(sub.add_parser(name), needs_config=True)

    render = sub.add_parser("render", help="turntable strip from a textured OBJ")
    render.add_argument("mesh", help="OBJ path (with MTL/PNG alongside)")
    render.add_argument("--out", default="turntable.png")
    render.add_argument("--frames", type=int, default=8)
    render.add_argument("--size", type=int, default=256)
    render.add_argument("--verbose", action="store_true")

    inspect = sub.add_parser("inspect", help="print mesh statistics as JSON")
    inspect.add_argument("mesh", help="OBJ path")
    inspect.add_argument("--verbose", action="store_true")
    return parser


def _apply_flag_overrides(args) -> dict:
    overrides: dict = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["output"] = {"dir": args.out}
    if args.guidance is not None:
        kind, _, value = args.guidance.partition(":")
        if kind == "analytic" and value:
            overrides["guidance"] = {"mode": "analytic", "directory": value}
        elif kind == "remote" and value:
            overrides["guidance"] = {"mode": "remote", "url": value}
        else:
            raise _UsageError(f"--guidance must be analytic:DIR or remote:URL, got {args.guidance!r}")
    return overrides


def _cmd_inspect(args) -> int:
    loaded = obj_io.load_mesh(args.mesh)
    mesh = loaded.mesh
    lo, hi = mesh.bbox
    uv_coverage = 0.0
    if loaded.uvs is not None:
        atlas = TextureAtlas(
            uvs=loaded.uvs,
            texels=np.zeros((64, 64, 3)),
            fill=np.zeros((64, 64), dtype=np.uint8),
            weight=np.zeros((64, 64)),
            bound_face_count=mesh.n_faces,
        )
        rows, _, _, _ = atlas.texel_table()
        uv_coverage = len(np.unique(rows)) / 64.0 if len(rows) else 0.0
    stats = {
        "n": mesh.n_vertices,
        "m": mesh.n_faces,
        "area": mesh.surface_area,
        "bbox": {"min": lo.tolist(), "max": hi.tolist()},
        "uv_coverage": uv_coverage,
        "components": mesh.n_components,
    }
    print(json.dumps(stats))
    return 0


def _cmd_render(args) -> int:
    loaded = obj_io.load_mesh(args.mesh)
    mesh = loaded.mesh
    if loaded.uvs is not None and loaded.texture is not None:
        atlas = generate_atlas(mesh, loaded.texture.shape[0], uvs=loaded.uvs)
        atlas.texels[:] = loaded.texture
    else:
        atlas = generate_atlas(mesh, 64)
    strip = pipeline.render_turntable(
        mesh, atlas, args.frames, args.size, ShadingConfig()
    )
    save_image_png(args.out, strip)
    print(json.dumps({"turntable": args.out, "frames": args.frames}))
    return 0


def _stage_config(args) -> dict:
    return load_config(args.config, overrides=_apply_flag_overrides(args))


def _cmd_run(args) -> int:
    report = pipeline.run_full(_stage_config(args), threads=args.threads)
    print(json.dumps({"outputs": report["outputs"]}))
    return 0


def _cmd_deform(args) -> int:
    cfg = _stage_config(args)
    schedule = pipeline._schedule_from_config(cfg["guidance"])
    provider = pipeline.make_provider(cfg, schedule)
    loaded = obj_io.load_mesh(cfg["input"]["mesh"])
    result = pipeline.stage1_deform(loaded.mesh, cfg["input"]["prompt"], provider,
                                    cfg, threads=args.threads)
    out_dir = cfg["output"]["dir"]
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "coarse.obj")
    obj_io.save_mesh(result.mesh, path)
    print(json.dumps({"coarse_obj": path,
                      "final_loss": result.loss_history[-1] if result.loss_history else None}))
    return 0


def _cmd_texture(args) -> int:
    cfg = _stage_config(args)
    schedule = pipeline._schedule_from_config(cfg["guidance"])
    provider = pipeline.make_provider(cfg, schedule)
    loaded = obj_io.load_mesh(cfg["input"]["mesh"])
    out_dir = cfg["output"]["dir"]
    os.makedirs(out_dir, exist_ok=True)
    atlas, coverage = pipeline.stage1_texture(
        loaded.mesh, cfg["input"]["prompt"], provider, cfg, uvs=loaded.uvs,
        checkpoint_dir=os.path.join(out_dir, "atlas"),
    )
    atlas.save(os.path.join(out_dir, "atlas"))
    path = os.path.join(out_dir, "textured.obj")
    obj_io.save_mesh(loaded.mesh, path, uvs=atlas.uvs, texture=atlas.texels)
    print(json.dumps({"textured_obj": path, "coverage": coverage}))
    return 0


def _cmd_refine(args) -> int:
    cfg = _stage_config(args)
    schedule = pipeline._schedule_from_config(cfg["guidance"])
    provider = pipeline.make_provider(cfg, schedule)
    loaded = obj_io.load_mesh(cfg["input"]["mesh"])
    out_dir = cfg["output"]["dir"]
    atlas_dir = os.path.join(out_dir, "atlas")
    if os.path.isdir(atlas_dir):
        atlas = TextureAtlas.load(atlas_dir)
    else:
        atlas, _ = pipeline.stage1_texture(loaded.mesh, cfg["input"]["prompt"],
                                           provider, cfg, uvs=loaded.uvs)
    result, atlas = pipeline.stage2_refine(loaded.mesh, atlas, cfg["input"]["prompt"],
                                           provider, cfg)
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "refined.obj")
    obj_io.save_mesh(result.mesh, path, uvs=atlas.uvs, texture=atlas.texels)
    print(json.dumps({"refined_obj": path,
                      "final_loss": result.loss_history[-1] if result.loss_history else None}))
    return 0


_COMMANDS = {
    "inspect": _cmd_inspect,
    "render": _cmd_render,
    "run": _cmd_run,
    "deform": _cmd_deform,
    "texture": _cmd_texture,
    "refine": _cmd_refine,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise _UsageError("a subcommand is required")
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(json.dumps({"error": "config", "message": str(exc)}), file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 2


def entry():  # console-script hook
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
