"""Hot kernels with a compiled core and a numpy fallback.

The Cython extensions are imported dynamically so the package still works
where they were never built; set DEMOFORGE_PURE_PYTHON=1 to force the
fallback (the benchmark and parity tests use both paths explicitly).
"""

import os

from demoforge._kernels import fps_py, raster_py

FORCE_PURE = os.environ.get("DEMOFORGE_PURE_PYTHON", "") == "1"
NATIVE = False

if not FORCE_PURE:
    try:
        from demoforge._kernels import _fps, _raster

        NATIVE = True
    except ImportError:
        NATIVE = False

if NATIVE:
    fps_indices = _fps.fps_indices
    rasterize_mesh = _raster.rasterize_mesh
else:
    fps_indices = fps_py.fps_indices
    rasterize_mesh = raster_py.rasterize_mesh

__all__ = ["NATIVE", "FORCE_PURE", "fps_indices", "rasterize_mesh", "fps_py", "raster_py"]
