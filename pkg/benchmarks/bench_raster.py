"""Rasterizer kernel benchmark: compiled extension vs pure-numpy fallback.

Usage: python benchmarks/bench_raster.py [--repeats N]
"""

import argparse
import time

import numpy as np

from meshforge import shapes
from meshforge.camera import Camera
from meshforge.render import rasterize
from meshforge.render.kernels import available_backends


def time_backend(mesh, camera, backend, repeats):
    rasterize(mesh, camera, backend=backend)  # warm up
    best = np.inf
    for _ in range(repeats):
        start = time.perf_counter()
        rasterize(mesh, camera, backend=backend)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    backends = available_backends()
    meshes = {
        "icosphere2 (320f)": shapes.icosphere(2),
        "icosphere3 (1280f)": shapes.icosphere(3),
        "blob4 (5120f)": shapes.blob(),
    }
    sizes = (64, 128, 256, 512)

    header = f"{'scene':<20} {'size':>5} " + " ".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f" {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for name, mesh in meshes.items():
        for size in sizes:
            camera = Camera(0.6, 0.3, 2.5, np.deg2rad(50), size, size)
            times = [time_backend(mesh, camera, b, args.repeats) for b in backends]
            row = f"{name:<20} {size:>5} " + " ".join(f"{t * 1e3:>10.2f}ms" for t in times)
            if len(times) == 2:
                row += f" {times[0] / times[1]:>8.1f}x"
            print(row)

    if len(backends) == 2:
        mesh = shapes.icosphere(3)
        camera = Camera(0.6, 0.3, 2.5, np.deg2rad(50), 128, 128)
        pure = rasterize(mesh, camera, backend="pure")
        compiled = rasterize(mesh, camera, backend="compiled")
        identical = (
            np.array_equal(pure.face_id, compiled.face_id)
            and np.array_equal(pure.depth, compiled.depth)
            and np.array_equal(pure.barycentrics, compiled.barycentrics)
        )
        print(f"\nbackends bit-identical: {identical}")


if __name__ == "__main__":
    main()
