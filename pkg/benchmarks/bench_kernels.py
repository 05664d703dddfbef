"""Compare the compiled kernels against the numpy fallback.

Workloads mirror the generation pipeline: FPS from a fused two-camera scan
down to the dataset cloud size, and rasterization of the bundled teapot at
observation resolution.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from demoforge import _kernels
from demoforge._kernels import fps_py, raster_py
from demoforge.render import Camera, look_at_pose
from demoforge.toyscene import teapot_mesh


def timeit(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_fps(repeat: int) -> list:
    rng = np.random.default_rng(0)
    rows = []
    for n_in, n_out in ((2048, 1024), (8192, 1024), (2048, 256)):
        pts = rng.normal(size=(n_in, 3))
        args = (pts, n_out, 0)
        t_py = timeit(lambda: fps_py.fps_indices(*args), repeat)
        row = [f"fps {n_in}->{n_out}", t_py, None]
        if _kernels.NATIVE:
            t_nat = timeit(lambda: _kernels._fps.fps_indices(*args), repeat)
            row[2] = t_nat
        rows.append(row)
    return rows


def bench_raster(repeat: int) -> list:
    mesh = teapot_mesh()
    rows = []
    for res in (128, 256):
        cam = Camera(float(res), float(res), (res - 1) / 2, (res - 1) / 2,
                     res, res,
                     look_at_pose(np.array([0.3, -0.25, 0.25]), np.zeros(3)))
        v_cam = cam.pose.inverse().apply(mesh.vertices)

        def run(impl):
            depth = np.full((res, res), np.inf)
            face_id = np.full((res, res), -1, dtype=np.int32)
            impl.rasterize_mesh(v_cam, mesh.faces, cam.fx, cam.fy,
                                cam.cx, cam.cy, depth, face_id, 0)

        t_py = timeit(lambda: run(raster_py), repeat)
        row = [f"raster teapot {res}x{res}", t_py, None]
        if _kernels.NATIVE:
            row[2] = timeit(lambda: run(_kernels._raster), repeat)
        rows.append(row)
    return rows


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5,
                        help="take the best of this many timings")
    args = parser.parse_args(argv)

    rows = bench_fps(args.repeat) + bench_raster(args.repeat)
    print(f"compiled kernels available: {_kernels.NATIVE}")
    print(f"{'workload':28s} {'numpy':>10s} {'compiled':>10s} {'speedup':>8s}")
    for name, t_py, t_nat in rows:
        if t_nat is None:
            print(f"{name:28s} {t_py * 1e3:8.2f}ms {'-':>10s} {'-':>8s}")
        else:
            print(f"{name:28s} {t_py * 1e3:8.2f}ms {t_nat * 1e3:8.2f}ms "
                  f"{t_py / t_nat:7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
