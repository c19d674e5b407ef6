"""Rasterizer kernel backend selection.

The compiled Cython kernel is used when importable; set MESHFORGE_KERNEL to
"pure" or "compiled" to force a backend. Both produce bit-identical output.
"""

import os

from . import _rastpy

_requested = os.environ.get("MESHFORGE_KERNEL", "auto").lower()

_compiled = None
if _requested in ("auto", "compiled"):
    try:
        from . import _rastc as _compiled  # type: ignore[no-redef]
    except ImportError:
        _compiled = None
        if _requested == "compiled":
            raise ImportError(
                "MESHFORGE_KERNEL=compiled but meshforge.render._rastc is not built; "
                "run `pip install -e .` to compile it"
            ) from None

ACTIVE_BACKEND = "compiled" if _compiled is not None else "pure"


def fill_buffers(screen, depths, valid, height, width, backend=None):
    chosen = backend or ACTIVE_BACKEND
    if chosen == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernel unavailable")
        import numpy as np

        return _compiled.fill_buffers(
            np.ascontiguousarray(screen),
            np.ascontiguousarray(depths),
            np.ascontiguousarray(valid, dtype=np.uint8),
            int(height),
            int(width),
        )
    return _rastpy.fill_buffers(screen, depths, valid, height, width)


def available_backends():
    return ("pure", "compiled") if _compiled is not None else ("pure",)
