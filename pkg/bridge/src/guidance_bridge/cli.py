"""Serve the bridge: `guidance-bridge [--mock|--analytic DIR|--real CONFIG]`."""

import argparse
import json
import sys

from .app import BridgeConfig, create_app


def build_config(args) -> BridgeConfig:
    if args.analytic:
        return BridgeConfig(mode="analytic", directory=args.analytic,
                            latent=tuple(args.latent),
                            max_concurrent=args.max_concurrent)
    if args.real:
        with open(args.real, "r", encoding="utf-8") as fh:
            spec = json.load(fh)
        return BridgeConfig(mode="real", model_ids=spec.get("models", {}),
                            device=spec.get("device", "cpu"),
                            latent=tuple(spec.get("latent", (64, 64, 4))),
                            max_concurrent=args.max_concurrent)
    return BridgeConfig(mode="mock", seed=args.seed, latent=tuple(args.latent),
                        max_concurrent=args.max_concurrent)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="guidance-bridge", description=__doc__)
    mode = parser.add_mutually_exclusive_group()
    mode.add_argument("--mock", action="store_true", help="deterministic mock models")
    mode.add_argument("--analytic", metavar="DIR",
                      help="serve per-view targets from a fixture directory")
    mode.add_argument("--real", metavar="CONFIG",
                      help="JSON config with pretrained model ids")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=7860)
    parser.add_argument("--latent", type=int, nargs=3, default=(64, 64, 4),
                        metavar=("H", "W", "C"))
    parser.add_argument("--max-concurrent", type=int, default=4)
    args = parser.parse_args(argv)

    try:
        config = build_config(args)
        app = create_app(config)
    except (ValueError, OSError) as exc:
        print(f"startup failed: {exc}", file=sys.stderr)
        return 1

    import uvicorn

    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
