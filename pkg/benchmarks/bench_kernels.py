"""Compiled versus pure-Python kernel timings.

    python benchmarks/bench_kernels.py [--sizes 64,128,256] [--repeats 3]

Prints one line per kernel and size with the median wall time of each
backend and the speedup. Skips the compiled column when the extension is
not built.
"""
import argparse
import time

import numpy as np

from lowrank_gw import _core
from lowrank_gw.contour import coupled_coefficients_direct
from lowrank_gw.linalg import lu_solve, qrcp, sym_eig


def _median(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def cases(n, rng):
    A = rng.standard_normal((n, n)) + n * np.eye(n)
    S = rng.standard_normal((n, n))
    S = S + S.T
    Z = rng.standard_normal((2 * n, n))
    B = rng.standard_normal((n, 8))
    u = rng.uniform(-3.0, 3.0, 64 * n)
    pv = rng.standard_normal((n // 2, 16))
    pc = rng.standard_normal((n // 2, 16))
    e = np.concatenate([np.linspace(-1.8, 0.0, 16), np.linspace(0.2, 2.0, 16)])
    return {
        "lu_solve": lambda b: lu_solve(A, B, backend=b),
        "qrcp": lambda b: qrcp(Z, max_rank=n // 2, backend=b),
        "sym_eig": lambda b: sym_eig(S, backend=b),
        "sncndn": lambda b: _core.get_backend(b).sncndn(u, 0.5),
        "coupled_direct": lambda b: coupled_coefficients_direct(pv, pc, e, backend=b),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="64,128,256")
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args(argv)
    backends = [b for b in ("python", "compiled") if b in _core.BACKENDS]
    rng = np.random.default_rng(0)
    print(f"{'kernel':<16}{'n':>6}" + "".join(f"{b + ' [s]':>16}" for b in backends) + f"{'speedup':>10}")
    for n in (int(s) for s in args.sizes.split(",")):
        for name, fn in cases(n, rng).items():
            t = [_median(lambda: fn(b), args.repeats) for b in backends]
            speed = f"{t[0] / t[1]:>9.1f}x" if len(t) == 2 else f"{'n/a':>10}"
            print(f"{name:<16}{n:>6}" + "".join(f"{x:>16.4g}" for x in t) + speed)


if __name__ == "__main__":
    main()
