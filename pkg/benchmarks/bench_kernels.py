"""Timings for the jitted inner kernels against their numpy twins.

Run:  python benchmarks/bench_kernels.py

The package-level backend is chosen at import time from KINAP_NUMBA; this
script times both implementations directly, plus one full staggered step for
context (the collision FFT work is backend independent).
"""

import time

import numpy as np

from kinap import _accel
from kinap.collision import BoltzmannSpectral
from kinap.grid import SpatialGrid, VelocityGrid
from kinap.harness import load_scenario, make_f0
from kinap.micromacro import (
    KnudsenField,
    MicroMacroSetup,
    initial_state,
    mm_step,
)


def timeit(fn, *args, repeat=20):
    fn(*args)   # warm up (and trigger jit compilation)
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat


def main():
    rng = np.random.default_rng(0)
    shapes = [(101, 33, 33), (101, 65, 65)]
    print(f"numba backend active in package: {_accel.USING_NUMBA}\n")
    print(f"{'kernel':28s} {'shape':14s} {'numpy':>10s} {'numba':>10s} {'speedup':>8s}")
    for shape in shapes:
        h = rng.standard_normal(shape)
        sm = np.exp(0.5 * rng.standard_normal(shape))
        t_np = timeit(_accel.fp_apply_numpy, h, sm, 0.4)
        t_nb = timeit(_accel.fp_apply_numba, h, sm, 0.4)
        print(f"{'fp stencil apply':28s} {str(shape):14s} "
              f"{t_np * 1e3:9.2f}ms {t_nb * 1e3:9.2f}ms {t_np / t_nb:7.1f}x")
        a = rng.standard_normal(shape)
        b = rng.standard_normal(shape)
        t_np = timeit(_accel.minmod_numpy, a, b)
        t_nb = timeit(_accel.minmod_numba, a, b)
        print(f"{'minmod limiter':28s} {str(shape):14s} "
              f"{t_np * 1e3:9.2f}ms {t_nb * 1e3:9.2f}ms {t_np / t_nb:7.1f}x")

    sc = load_scenario("test1a")
    sc.eps = 1e-4
    vg = VelocityGrid(sc.lv, sc.nv, sc.dim)
    sg = SpatialGrid(sc.nx, sc.x_a, sc.x_b, sc.bc)
    setup = MicroMacroSetup(sg, vg, BoltzmannSpectral(vg, n_theta=sc.n_theta))
    st = initial_state(make_f0(sc), sg, vg, KnudsenField.constant(sc.eps, sg))
    dt = sg.dx / 20
    st = mm_step(st, setup, dt)
    t0 = time.perf_counter()
    n = 10
    for _ in range(n):
        st = mm_step(st, setup, dt)
    per = (time.perf_counter() - t0) / n
    print(f"\nfull staggered step (nx=100, nv=32): {per * 1e3:.0f} ms "
          f"(collision FFTs dominate and are backend independent)")


if __name__ == "__main__":
    main()
