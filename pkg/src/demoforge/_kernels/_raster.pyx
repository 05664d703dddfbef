# Z-buffer triangle rasterizer, compiled twin of raster_py.rasterize_mesh.
# Arithmetic and accept rules must stay in lockstep with the fallback.

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, floor

cdef double NEAR_EPS = 1e-6


def rasterize_mesh(v_cam_in, faces_in, double fx, double fy, double cx,
                   double cy, depth_in, face_id_in, int base_id):
    cdef double[:, ::1] v = np.ascontiguousarray(v_cam_in, dtype=np.float64)
    cdef cnp.int32_t[:, ::1] faces = np.ascontiguousarray(faces_in, dtype=np.int32)
    cdef double[:, ::1] depth = depth_in
    cdef cnp.int32_t[:, ::1] face_id = face_id_in
    cdef Py_ssize_t H = depth.shape[0]
    cdef Py_ssize_t W = depth.shape[1]
    cdef Py_ssize_t F = faces.shape[0]
    cdef Py_ssize_t f, i0, i1, i2, px, py, lo_u, hi_u, lo_v, hi_v
    cdef double z0, z1, z2, u0, u1, u2, v0, v1, v2
    cdef double area, w0, w1, w2, zi, mn, mx, fpx, fpy

    for f in range(F):
        i0 = faces[f, 0]
        i1 = faces[f, 1]
        i2 = faces[f, 2]
        z0 = v[i0, 2]
        z1 = v[i1, 2]
        z2 = v[i2, 2]
        if z0 <= NEAR_EPS or z1 <= NEAR_EPS or z2 <= NEAR_EPS:
            continue
        u0 = fx * v[i0, 0] / z0 + cx
        u1 = fx * v[i1, 0] / z1 + cx
        u2 = fx * v[i2, 0] / z2 + cx
        v0 = fy * v[i0, 1] / z0 + cy
        v1 = fy * v[i1, 1] / z1 + cy
        v2 = fy * v[i2, 1] / z2 + cy
        area = (u1 - u0) * (v2 - v0) - (u2 - u0) * (v1 - v0)
        if area < 1e-12 and area > -1e-12:
            continue
        mn = u0
        if u1 < mn: mn = u1
        if u2 < mn: mn = u2
        mx = u0
        if u1 > mx: mx = u1
        if u2 > mx: mx = u2
        lo_u = <Py_ssize_t>ceil(mn)
        hi_u = <Py_ssize_t>floor(mx)
        if lo_u < 0: lo_u = 0
        if hi_u > W - 1: hi_u = W - 1
        mn = v0
        if v1 < mn: mn = v1
        if v2 < mn: mn = v2
        mx = v0
        if v1 > mx: mx = v1
        if v2 > mx: mx = v2
        lo_v = <Py_ssize_t>ceil(mn)
        hi_v = <Py_ssize_t>floor(mx)
        if lo_v < 0: lo_v = 0
        if hi_v > H - 1: hi_v = H - 1
        if lo_u > hi_u or lo_v > hi_v:
            continue
        for py in range(lo_v, hi_v + 1):
            fpy = <double>py
            for px in range(lo_u, hi_u + 1):
                fpx = <double>px
                w0 = ((u1 - fpx) * (v2 - fpy) - (u2 - fpx) * (v1 - fpy)) / area
                if w0 < 0.0:
                    continue
                w1 = ((u2 - fpx) * (v0 - fpy) - (u0 - fpx) * (v2 - fpy)) / area
                if w1 < 0.0:
                    continue
                w2 = 1.0 - w0 - w1
                if w2 < 0.0:
                    continue
                zi = 1.0 / (w0 / z0 + w1 / z1 + w2 / z2)
                if zi < depth[py, px]:
                    depth[py, px] = zi
                    face_id[py, px] = base_id + f
