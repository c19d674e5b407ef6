# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled z-buffer fill kernel.

Arithmetic twin of _rastpy.fill_buffers: same expressions in the same
order (built with -ffp-contract=off), so outputs are bit-identical to the
pure-numpy fallback.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, floor, INFINITY

cnp.import_array()


def fill_buffers(double[:, :, ::1] screen, double[:, ::1] depths,
                 cnp.uint8_t[::1] valid, int height, int width):
    cdef cnp.ndarray[cnp.int32_t, ndim=2] face_id_arr = np.full(
        (height, width), -1, dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] bary_arr = np.zeros(
        (height, width, 3), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] zbuf_arr = np.full(
        (height, width), np.inf, dtype=np.float64)
    cdef cnp.int32_t[:, ::1] face_id = face_id_arr
    cdef double[:, :, ::1] bary = bary_arr
    cdef double[:, ::1] zbuf = zbuf_arr

    cdef Py_ssize_t f, m = screen.shape[0]
    cdef int lo_x, hi_x, lo_y, hi_y, ix, iy
    cdef double x0, y0, x1, y1, x2, y2, area2
    cdef double mn, mx, px, py
    cdef double e0, e1, e2, l0, l1, l2, r0, r1, r2, s, d
    cdef bint inside

    with nogil:
        for f in range(m):
            if not valid[f]:
                continue
            x0 = screen[f, 0, 0]; y0 = screen[f, 0, 1]
            x1 = screen[f, 1, 0]; y1 = screen[f, 1, 1]
            x2 = screen[f, 2, 0]; y2 = screen[f, 2, 1]
            area2 = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
            if area2 == 0.0:
                continue
            mn = x0
            if x1 < mn: mn = x1
            if x2 < mn: mn = x2
            mx = x0
            if x1 > mx: mx = x1
            if x2 > mx: mx = x2
            lo_x = <int>ceil(mn)
            if lo_x < 0: lo_x = 0
            hi_x = <int>floor(mx)
            if hi_x > width - 1: hi_x = width - 1
            mn = y0
            if y1 < mn: mn = y1
            if y2 < mn: mn = y2
            mx = y0
            if y1 > mx: mx = y1
            if y2 > mx: mx = y2
            lo_y = <int>ceil(mn)
            if lo_y < 0: lo_y = 0
            hi_y = <int>floor(mx)
            if hi_y > height - 1: hi_y = height - 1
            if lo_x > hi_x or lo_y > hi_y:
                continue
            for iy in range(lo_y, hi_y + 1):
                py = <double>iy
                for ix in range(lo_x, hi_x + 1):
                    px = <double>ix
                    e0 = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
                    e1 = (x0 - x2) * (py - y2) - (y0 - y2) * (px - x2)
                    e2 = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)
                    if area2 > 0.0:
                        inside = e0 >= 0.0 and e1 >= 0.0 and e2 >= 0.0
                    else:
                        inside = e0 <= 0.0 and e1 <= 0.0 and e2 <= 0.0
                    if not inside:
                        continue
                    l0 = e0 / area2
                    l1 = e1 / area2
                    l2 = e2 / area2
                    r0 = l0 / depths[f, 0]
                    r1 = l1 / depths[f, 1]
                    r2 = l2 / depths[f, 2]
                    s = r0 + r1 + r2
                    d = (l0 + l1 + l2) / s
                    if d < zbuf[iy, ix]:
                        zbuf[iy, ix] = d
                        face_id[iy, ix] = <cnp.int32_t>f
                        bary[iy, ix, 0] = r0 / s
                        bary[iy, ix, 1] = r1 / s
                        bary[iy, ix, 2] = r2 / s
    return face_id_arr, bary_arr, zbuf_arr
