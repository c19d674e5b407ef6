"""Pure-numpy z-buffer fill kernel (fallback for the compiled extension).

Must stay arithmetically identical to _rastc.pyx: same expressions in the
same order, so both backends produce bit-identical buffers.
"""

import numpy as np


def fill_buffers(screen, depths, valid, height, width):
    """Scanline-free z-buffer rasterization over face bounding boxes.

    Parameters
    ----------
    screen : (m, 3, 2) float64
        Screen-space corner coordinates (pixel units, centers at integers).
    depths : (m, 3) float64
        Positive camera-space depth per corner.
    valid : (m,) bool
        Faces eligible for drawing (in front of the near plane).
    height, width : int

    Returns
    -------
    face_id (H, W) int32, barycentrics (H, W, 3) float64, depth (H, W) float64
    """
    face_id = np.full((height, width), -1, dtype=np.int32)
    bary = np.zeros((height, width, 3), dtype=np.float64)
    zbuf = np.full((height, width), np.inf, dtype=np.float64)

    for f in range(len(screen)):
        if not valid[f]:
            continue
        x0, y0 = screen[f, 0]
        x1, y1 = screen[f, 1]
        x2, y2 = screen[f, 2]
        area2 = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area2 == 0.0:
            continue
        lo_x = max(0, int(np.ceil(min(x0, x1, x2))))
        hi_x = min(width - 1, int(np.floor(max(x0, x1, x2))))
        lo_y = max(0, int(np.ceil(min(y0, y1, y2))))
        hi_y = min(height - 1, int(np.floor(max(y0, y1, y2))))
        if lo_x > hi_x or lo_y > hi_y:
            continue
        px = np.arange(lo_x, hi_x + 1, dtype=np.float64)[None, :]
        py = np.arange(lo_y, hi_y + 1, dtype=np.float64)[:, None]
        e0 = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        e1 = (x0 - x2) * (py - y2) - (y0 - y2) * (px - x2)
        e2 = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)
        if area2 > 0.0:
            inside = (e0 >= 0.0) & (e1 >= 0.0) & (e2 >= 0.0)
        else:
            inside = (e0 <= 0.0) & (e1 <= 0.0) & (e2 <= 0.0)
        if not inside.any():
            continue
        l0 = e0 / area2
        l1 = e1 / area2
        l2 = e2 / area2
        r0 = l0 / depths[f, 0]
        r1 = l1 / depths[f, 1]
        r2 = l2 / depths[f, 2]
        s = r0 + r1 + r2
        d = (l0 + l1 + l2) / s
        win = inside & (d < zbuf[lo_y : hi_y + 1, lo_x : hi_x + 1])
        if not win.any():
            continue
        sub = (slice(lo_y, hi_y + 1), slice(lo_x, hi_x + 1))
        zbuf[sub][win] = d[win]
        face_id[sub][win] = f
        bary[sub + (0,)][win] = (r0 / s)[win]
        bary[sub + (1,)][win] = (r1 / s)[win]
        bary[sub + (2,)][win] = (r2 / s)[win]
    return face_id, bary, zbuf
