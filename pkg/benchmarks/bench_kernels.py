"""Benchmark the compiled kernels against the pure-numpy fallback.

Usage: python benchmarks/bench_kernels.py [--points 40000] [--subdiv 3]
The numpy numbers come from skinret._kernels_np directly, so one process
measures both backends regardless of which one skinret.backend selected.
"""

import argparse
import time

import numpy as np

from skinret import _kernels_np
from skinret import backend
from skinret.fields import voxelize
from skinret.synthetic import icosphere


def timed(fn, *args, repeat=3):
    best = float("inf")
    result = None
    for _ in range(repeat):
        start = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - start)
    return best, result


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--points", type=int, default=40000)
    parser.add_argument("--subdiv", type=int, default=3)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    verts, tris = icosphere(args.subdiv)
    points = rng.normal(size=(args.points, 3)) * 1.2
    print(f"mesh: {len(verts)} vertices / {len(tris)} triangles, {args.points} query points")
    print(f"selected backend: {backend.backend_name()}")
    if not backend.COMPILED:
        print("compiled extension missing: numpy rows below are duplicates\n")

    rows = []
    for name, compiled_fn, numpy_fn, call_args in [
        ("point_mesh_distances", backend.point_mesh_distances, _kernels_np.point_mesh_distances, (points, verts, tris)),
        ("winding_numbers", backend.winding_numbers, _kernels_np.winding_numbers, (points, verts, tris)),
    ]:
        t_c, r_c = timed(compiled_fn, *call_args)
        t_n, r_n = timed(numpy_fn, *call_args, repeat=1)
        assert np.allclose(r_c, r_n, atol=1e-9), f"{name}: backends disagree"
        rows.append((name, t_c, t_n))

    field = voxelize(verts, tris, 0.05, 0.4, "repulsive")
    inner = points[np.all(np.abs(points) < 1.2, axis=1)]
    t_c, (vc, gc) = timed(backend.trilinear, field.values, field.origin, field.spacing, inner)
    t_n, (vn, gn) = timed(_kernels_np.trilinear, field.values, field.origin, field.spacing, inner)
    assert np.allclose(vc, vn, atol=1e-12) and np.allclose(gc, gn, atol=1e-12)
    rows.append(("trilinear", t_c, t_n))

    print(f"{'kernel':<24}{'compiled (s)':>14}{'numpy (s)':>12}{'speedup':>9}")
    for name, t_c, t_n in rows:
        print(f"{name:<24}{t_c:>14.4f}{t_n:>12.4f}{t_n / t_c:>8.1f}x")


if __name__ == "__main__":
    main()
