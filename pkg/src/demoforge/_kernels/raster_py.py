"""Numpy fallback for z-buffer triangle rasterization."""

import numpy as np

NEAR_EPS = 1e-6


def rasterize_mesh(
    v_cam: np.ndarray,
    faces: np.ndarray,
    fx: float,
    fy: float,
    cx: float,
    cy: float,
    depth: np.ndarray,
    face_id: np.ndarray,
    base_id: int,
) -> None:
    """Accumulate one mesh into (depth, face_id) buffers, in place.

    v_cam: (V, 3) vertices in the camera frame (+z forward).
    Pixels sample the image plane at integer coordinates. Depth is linear
    in 1/z across each triangle (exact for planar faces). Triangles with
    any vertex at or behind z = NEAR_EPS are skipped; no clipping.
    Mirrors the compiled kernel exactly.
    """
    H, W = depth.shape
    v = np.asarray(v_cam, dtype=np.float64)
    z = v[:, 2]
    u = fx * v[:, 0] / np.where(z > NEAR_EPS, z, 1.0) + cx
    w = fy * v[:, 1] / np.where(z > NEAR_EPS, z, 1.0) + cy
    for f in range(faces.shape[0]):
        i0, i1, i2 = faces[f]
        z0, z1, z2 = z[i0], z[i1], z[i2]
        if z0 <= NEAR_EPS or z1 <= NEAR_EPS or z2 <= NEAR_EPS:
            continue
        u0, u1, u2 = u[i0], u[i1], u[i2]
        v0, v1, v2 = w[i0], w[i1], w[i2]
        area = (u1 - u0) * (v2 - v0) - (u2 - u0) * (v1 - v0)
        if abs(area) < 1e-12:
            continue
        lo_u = max(0, int(np.ceil(min(u0, u1, u2))))
        hi_u = min(W - 1, int(np.floor(max(u0, u1, u2))))
        lo_v = max(0, int(np.ceil(min(v0, v1, v2))))
        hi_v = min(H - 1, int(np.floor(max(v0, v1, v2))))
        if lo_u > hi_u or lo_v > hi_v:
            continue
        px, py = np.meshgrid(
            np.arange(lo_u, hi_u + 1, dtype=np.float64),
            np.arange(lo_v, hi_v + 1, dtype=np.float64),
        )
        w0 = ((u1 - px) * (v2 - py) - (u2 - px) * (v1 - py)) / area
        w1 = ((u2 - px) * (v0 - py) - (u0 - px) * (v2 - py)) / area
        w2 = 1.0 - w0 - w1
        zi = 1.0 / (w0 / z0 + w1 / z1 + w2 / z2)
        tile = depth[lo_v : hi_v + 1, lo_u : hi_u + 1]
        win = (w0 >= 0.0) & (w1 >= 0.0) & (w2 >= 0.0) & (zi < tile)
        tile[win] = zi[win]
        face_id[lo_v : hi_v + 1, lo_u : hi_u + 1][win] = base_id + f
