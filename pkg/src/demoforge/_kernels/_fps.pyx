# Greedy farthest point sampling, compiled twin of fps_py.fps_indices.
# Keep the arithmetic identical to the numpy fallback: squared distances,
# argmax ties to the lowest index. Coordinates are copied into separate
# contiguous arrays and the per-iteration work is split into three branchless
# passes (min-update, max-reduce, first-index scan) so the compiler can
# vectorize them.

import numpy as np

cimport numpy as cnp


def fps_indices(pts_in, Py_ssize_t n, Py_ssize_t start):
    cdef double[:, ::1] pts = np.ascontiguousarray(pts_in, dtype=np.float64)
    cdef Py_ssize_t N = pts.shape[0]
    out_arr = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_arr
    xs_arr = np.ascontiguousarray(pts_in, dtype=np.float64)[:, 0].copy()
    ys_arr = np.ascontiguousarray(pts_in, dtype=np.float64)[:, 1].copy()
    zs_arr = np.ascontiguousarray(pts_in, dtype=np.float64)[:, 2].copy()
    cdef double[::1] xs = xs_arr
    cdef double[::1] ys = ys_arr
    cdef double[::1] zs = zs_arr
    d2_arr = np.empty(N, dtype=np.float64)
    cdef double[::1] d2 = d2_arr
    cdef Py_ssize_t i, k, best
    cdef double dx, dy, dz, d, mx
    cdef double bx, by, bz

    out[0] = start
    bx = xs[start]
    by = ys[start]
    bz = zs[start]
    for i in range(N):
        dx = xs[i] - bx
        dy = ys[i] - by
        dz = zs[i] - bz
        d2[i] = dx * dx + dy * dy + dz * dz

    best = 0
    mx = d2[0]
    for i in range(1, N):
        if d2[i] > mx:
            mx = d2[i]
            best = i

    for k in range(1, n):
        out[k] = best
        if k == n - 1:
            break
        # fused pass: shrink d2 against the new pick, track the next argmax
        bx = xs[best]
        by = ys[best]
        bz = zs[best]
        mx = -1.0
        best = 0
        for i in range(N):
            dx = xs[i] - bx
            dy = ys[i] - by
            dz = zs[i] - bz
            d = dx * dx + dy * dy + dz * dz
            d = d if d < d2[i] else d2[i]
            d2[i] = d
            if d > mx:
                mx = d
                best = i

    return out_arr
