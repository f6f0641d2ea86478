"""Benchmark the numba kernels against the pure-numpy fallbacks.

Usage:
    python benchmarks/bench_kernels.py [--rays N] [--points N] [--voxels N]

The module-level dispatch (env var MESHREFORM_NUMBA) is irrelevant here;
both implementations are imported explicitly and timed on identical inputs.
"""

import argparse
import time

import numpy as np

from meshreform import kernels


def timeit(fn, *args, repeat=5):
    fn(*args)   # warm up (JIT compile, cache touch)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_rays(n_rays, n_tris, rng):
    v0 = rng.normal(size=(n_tris, 3))
    v1 = v0 + rng.normal(scale=0.3, size=(n_tris, 3))
    v2 = v0 + rng.normal(scale=0.3, size=(n_tris, 3))
    origins = rng.normal(size=(n_rays, 3))
    dirs = rng.normal(size=(n_rays, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    rows = [("ray_mesh_first_hit", kernels.ray_mesh_first_hit_numpy,
             getattr(kernels, "ray_mesh_first_hit_numba", None),
             (origins, dirs, v0, v1, v2))]
    return rows


def bench_points(n, rng):
    q = rng.normal(size=(n, 3))
    r = rng.normal(size=(n, 3))
    return [
        ("nearest_sq_dists", kernels.nearest_sq_dists_numpy,
         getattr(kernels, "nearest_sq_dists_numba", None), (q, r)),
        ("nearest_sq_sum_capped", kernels.nearest_sq_sum_capped_numpy,
         getattr(kernels, "nearest_sq_sum_capped_numba", None), (q, r, 1e30)),
    ]


def bench_voxels(n, rng):
    side = int(round(n ** (1 / 3)))
    ticks = np.linspace(-1, 1, side)
    xx, yy, zz = np.meshgrid(ticks, ticks, ticks, indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])
    centers = rng.uniform(-0.5, 0.5, size=(4, 3))
    axes = np.stack([np.eye(3)] * 4)
    halfs = rng.uniform(0.1, 0.6, size=(4, 3))
    return [("points_in_boxes", kernels.points_in_boxes_numpy,
             getattr(kernels, "points_in_boxes_numba", None),
             (pts, centers, axes, halfs))]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--rays", type=int, default=2000)
    ap.add_argument("--tris", type=int, default=2000)
    ap.add_argument("--points", type=int, default=3000)
    ap.add_argument("--voxels", type=int, default=64 ** 3)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    rows = (bench_rays(args.rays, args.tris, rng)
            + bench_points(args.points, rng)
            + bench_voxels(args.voxels, rng))

    print(f"numba available: {kernels.USE_NUMBA}")
    print(f"{'kernel':<24} {'numpy':>10} {'numba':>10} {'speedup':>9}")
    for name, fn_np, fn_nb, data in rows:
        t_np = timeit(fn_np, *data)
        if fn_nb is None:
            print(f"{name:<24} {t_np * 1e3:>8.1f}ms {'n/a':>10} {'n/a':>9}")
            continue
        t_nb = timeit(fn_nb, *data)
        print(f"{name:<24} {t_np * 1e3:>8.1f}ms {t_nb * 1e3:>8.1f}ms "
              f"{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
