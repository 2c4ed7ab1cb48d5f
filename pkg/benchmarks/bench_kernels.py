"""Time the compiled kernels against their numpy fallbacks.

Run ``python benchmarks/bench_kernels.py``.  Each kernel is called once to
trigger compilation, then timed over a few repeats on the same inputs; the
script also reports the largest difference between the two backends.
"""
import argparse
import time

import numpy as np

from torus_renorm import _accel, kernels
from torus_renorm.checks import random_field
from torus_renorm.field import grid_points


def best_of(func, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = func()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(size):
    f = random_field(0, 2, 16, 120, 1.0)
    pts = grid_points(64 * size, 2)
    omega = np.array([0.6180339887498949, 1.0])
    tmat = np.array([[0.0, -1.0], [1.0, -1.0]])
    mat = np.array([[1.3, 0.4], [0.2, 0.83]])
    x0 = grid_points(2, 2)
    return {
        "eval_modes": (kernels.eval_modes_nb, kernels.eval_modes_np, (f.ks, f.coef, pts)),
        "min_l1_box": (kernels.min_l1_box_nb, kernels.min_l1_box_np, (mat, 30 * size)),
        "cone_gain": (kernels.cone_gain_nb, kernels.cone_gain_np, (omega, 0.38, tmat, 25 * size)),
        "rk4_orbits": (kernels.rk4_orbits_nb, kernels.rk4_orbits_np,
                       (f.ks, f.coef.real.astype(complex), x0, 20.0 * size, 1e-2)),
    }


def _diff(a, b):
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    return max(float(np.max(np.abs(np.asarray(x) - np.asarray(y)))) for x, y in zip(a, b))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--size", type=int, default=1, help="problem size multiplier")
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        print("numba is not installed; only the numpy path exists")
        return
    print(f"{'kernel':<12} {'numba [s]':>10} {'numpy [s]':>10} {'speedup':>8} {'max diff':>10}")
    for name, (nb, np_, argv) in cases(args.size).items():
        nb(*argv)
        t_nb, r_nb = best_of(lambda: nb(*argv), args.repeats)
        t_np, r_np = best_of(lambda: np_(*argv), args.repeats)
        print(f"{name:<12} {t_nb:10.4f} {t_np:10.4f} {t_np / t_nb:8.1f} {_diff(r_nb, r_np):10.2e}")


if __name__ == "__main__":
    main()
