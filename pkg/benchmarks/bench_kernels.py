"""Time the compiled kernels against the numpy fallback.

Run ``python benchmarks/bench_kernels.py``; pass ``--repeat`` to change the
number of timed repetitions (the best one is reported).
"""

import argparse
import timeit

import numpy as np

from lcsfd import kernels
from lcsfd.plant import MsdParams, linearize_msd, rk4_affine_map


def cases():
    rng = np.random.default_rng(0)
    p = MsdParams()
    u = rng.uniform(-50, 50, 3 * 512)
    x0 = np.zeros(2)
    phi, gam = rk4_affine_map(*linearize_msd(), 0.01)
    phi = np.ascontiguousarray(phi)
    z = rng.normal(size=(512, 2))
    anchors = rng.normal(size=(25, 2))
    eta = rng.uniform(-1, 1, 49)
    un = rng.uniform(-1, 1, 512)
    yn = rng.uniform(-1, 1, 512)
    return {
        "msd_rk4 (1536 steps)": lambda k: k.msd_rk4(x0, u, 0.01, p.m, p.s, p.c, p.l, p.a),
        "affine_recursion (1536 steps)": lambda k: k.affine_recursion(phi, gam, x0, u),
        "sqdist_lower (512 points)": lambda k: k.sqdist_lower(z),
        "se_cross (25 x 512)": lambda k: k.se_cross(anchors, z, 3.16),
        "noe_run free run + jacobian (512)": lambda k: k.noe_run(eta, 8, 2, 2, un, yn, True, True),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = kernels.BACKENDS
    if "cython" not in backends:
        print("compiled extension not available; only the numpy fallback is timed")
    names = list(backends)
    print(f"{'kernel':36s}" + "".join(f"{n:>14s}" for n in names) + ("   speedup" if len(names) > 1 else ""))
    for label, fn in cases().items():
        best = {}
        for name, mod in backends.items():
            timer = timeit.Timer(lambda mod=mod: fn(mod))
            number, _ = timer.autorange()
            best[name] = min(timer.repeat(args.repeat, number)) / number
        row = f"{label:36s}" + "".join(f"{best[n] * 1e3:11.3f} ms" for n in names)
        if len(names) > 1:
            row += f"   {best['python'] / best['cython']:7.1f}x"
        print(row)


if __name__ == "__main__":
    main()
