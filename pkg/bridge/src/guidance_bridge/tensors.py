"""Wire tensor codec: base64 little-endian float32, row-major."""

import base64

import numpy as np


class TensorError(ValueError):
    """Malformed wire tensor; carries the offending field name."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


def encode(array) -> dict:
    arr = np.ascontiguousarray(array, dtype="<f4")
    return {
        "shape": list(arr.shape),
        "dtype": "f32",
        "data": base64.b64encode(arr.tobytes()).decode("ascii"),
    }


def decode(obj, field: str) -> np.ndarray:
    if not isinstance(obj, dict):
        raise TensorError(field, "tensor must be a JSON object")
    for key in ("shape", "dtype", "data"):
        if key not in obj:
            raise TensorError(field, f"missing {key!r}")
    if obj["dtype"] != "f32":
        raise TensorError(field, f"unsupported dtype {obj['dtype']!r}")
    try:
        shape = tuple(int(s) for s in obj["shape"])
    except (TypeError, ValueError):
        raise TensorError(field, "shape must be a list of integers") from None
    try:
        raw = base64.b64decode(obj["data"], validate=True)
    except Exception:
        raise TensorError(field, "data is not valid base64") from None
    expected = int(np.prod(shape)) * 4 if shape else 4
    if len(raw) != expected:
        raise TensorError(field, f"{len(raw)} bytes, expected {expected}")
    return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)
