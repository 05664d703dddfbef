"""Numpy fallback for greedy farthest point sampling."""

import numpy as np


def fps_indices(points: np.ndarray, n: int, start: int) -> np.ndarray:
    """Greedy max-min selection of n indices, seeded at `start`.

    Squared distances throughout; argmax ties resolve to the lowest index.
    Mirrors the compiled kernel exactly.
    """
    pts = np.ascontiguousarray(points, dtype=np.float64)
    out = np.empty(n, dtype=np.int64)
    out[0] = start
    diff = pts - pts[start]
    d2 = np.einsum("ij,ij->i", diff, diff)
    for k in range(1, n):
        best = int(np.argmax(d2))
        out[k] = best
        diff = pts - pts[best]
        np.minimum(d2, np.einsum("ij,ij->i", diff, diff), out=d2)
    return out
