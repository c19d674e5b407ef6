"""Protocol conformance checks runnable against any endpoint.

Usage: python -m guidance_bridge.conformance http://host:port
Exit 0 when every declared capability answers with schema-valid responses
and the tensor codec round-trips byte-exactly.
"""

import json
import os
import sys

import numpy as np
import requests

from . import tensors

SCHEMA_DIR = os.path.join(os.path.dirname(__file__), "schema")


def load_schema(name):
    with open(os.path.join(SCHEMA_DIR, name), "r", encoding="utf-8") as fh:
        return json.load(fh)


def validate(payload, schema_name):
    try:
        import jsonschema
    except ImportError:  # minimal structural check without the dependency
        schema = load_schema(schema_name)
        for key in schema.get("required", []):
            if key not in payload:
                raise AssertionError(f"{schema_name}: missing {key!r}")
        return
    jsonschema.validate(payload, load_schema(schema_name))


def run(endpoint: str, verbose: bool = True) -> list:
    endpoint = endpoint.rstrip("/")
    failures = []

    def check(name, fn):
        try:
            fn()
            if verbose:
                print(f"conformance {name}: PASS")
        except Exception as exc:  # noqa: BLE001 - report and continue
            failures.append((name, exc))
            if verbose:
                print(f"conformance {name}: FAIL ({exc})")

    caps_body = {}

    def capabilities():
        resp = requests.get(f"{endpoint}/capabilities", timeout=30)
        assert resp.status_code == 200, resp.status_code
        validate(resp.json(), "capabilities.json")
        caps_body.update(resp.json())

    check("capabilities", capabilities)
    caps = set(caps_body.get("capabilities", []))
    latent = caps_body.get("latent", {"h": 64, "w": 64, "c": 4})
    shape = (latent["h"], latent["w"], latent["c"])
    cameras = caps_body.get("cameras") or []
    if cameras:
        height = int(cameras[0].get("height", 64))
        width = int(cameras[0].get("width", 64))
    else:
        height = width = 64
    rng = np.random.default_rng(0)

    if "denoise" in caps:
        def denoise():
            payload = {
                "latent": tensors.encode(rng.standard_normal(shape).astype(np.float32)),
                "t": 500,
                "prompt": "conformance",
                "guidance_scale": 7.5,
                "view": 0,
            }
            resp = requests.post(f"{endpoint}/denoise", json=payload, timeout=60)
            assert resp.status_code == 200, resp.text
            validate(resp.json(), "denoise_response.json")
            out = tensors.decode(resp.json()["eps_hat"], "eps_hat")
            assert out.shape == shape, out.shape

        check("denoise", denoise)

    image = rng.uniform(size=(height, width, 3)).astype(np.float32)
    if "depthToImage" in caps:
        def depth2img():
            payload = {
                "depth": tensors.encode(np.zeros((height, width), np.float32)),
                "prompt": "conformance",
                "view": 0,
            }
            resp = requests.post(f"{endpoint}/depth2img", json=payload, timeout=120)
            assert resp.status_code == 200, resp.text
            validate(resp.json(), "image_response.json")

        check("depth2img", depth2img)

    if "inpaint" in caps:
        def inpaint():
            payload = {
                "image": tensors.encode(image),
                "mask": tensors.encode(np.ones((height, width), np.float32)),
                "depth": None,
                "prompt": "conformance",
                "view": 0,
            }
            resp = requests.post(f"{endpoint}/inpaint", json=payload, timeout=120)
            assert resp.status_code == 200, resp.text
            validate(resp.json(), "image_response.json")

        check("inpaint", inpaint)

    if "refine" in caps:
        def refine():
            payload = {
                "image": tensors.encode(image),
                "prompt": "conformance",
                "steps": 15,
                "view": 0,
            }
            resp = requests.post(f"{endpoint}/refine", json=payload, timeout=120)
            assert resp.status_code == 200, resp.text
            validate(resp.json(), "image_response.json")

        check("refine", refine)

    def malformed():
        resp = requests.post(f"{endpoint}/denoise",
                             json={"latent": {"shape": [1], "dtype": "f64", "data": ""},
                                   "t": 1}, timeout=30)
        assert resp.status_code == 400, resp.status_code
        validate(resp.json(), "error.json")

    check("malformed-tensor-rejected", malformed)

    def codec_round_trip():
        arr = rng.standard_normal((37, 23, 3)).astype(np.float32)
        back = tensors.decode(tensors.encode(arr), "x")
        assert np.array_equal(arr, back)

    check("tensor-codec-round-trip", codec_round_trip)
    return failures


def main(argv=None) -> int:
    argv = argv if argv is not None else sys.argv[1:]
    if len(argv) != 1:
        print("usage: python -m guidance_bridge.conformance ENDPOINT", file=sys.stderr)
        return 1
    failures = run(argv[0])
    return 0 if not failures else 2


if __name__ == "__main__":
    raise SystemExit(main())
