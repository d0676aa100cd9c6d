"""Compare the numba kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each line reports the best-of-``repeat`` wall time per backend and the
speed-up; results are checked to agree before timing.
"""
import argparse
import time

import numpy as np

from dopt import _accel
from dopt.infomat import InfoMatrix
from dopt.instance import ModelSpec
from dopt.oracle import price


def _best_time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _cases(rng):
    out = []
    for spec in (ModelSpec("linear", 16, 2), ModelSpec("linear", 20, 2), ModelSpec("quadratic", 8, 3),
                 ModelSpec("quadratic", 10, 3)):
        G = rng.standard_normal((spec.m, spec.m))
        Q = G @ G.T
        out.append((f"price {spec}", lambda spec=spec, Q=Q: price(spec, Q, k=5).top))

    m = 60
    G = rng.standard_normal((m, m))
    info = InfoMatrix.from_matrix(G @ G.T + m * np.eye(m))
    V = rng.standard_normal((200, m))

    def updown():
        return [info.update(v).downdate(v).ldet() for v in V]

    out.append((f"200 rank-one update+downdate, m={m}", updown))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'case':48s} {'numba':>10s} {'numpy':>10s} {'speed-up':>9s}")
    for name, fn in _cases(rng):
        _accel.USE_NUMBA = True
        ref = fn()  # also compiles
        t_jit = _best_time(fn, args.repeat)
        _accel.USE_NUMBA = False
        other = fn()
        t_np = _best_time(fn, args.repeat)
        if isinstance(ref, list) and ref and isinstance(ref[0], tuple):
            assert [p for p, _ in ref] == [p for p, _ in other], name
        else:
            np.testing.assert_allclose(ref, other, rtol=1e-9)
        print(f"{name:48s} {t_jit * 1e3:8.2f}ms {t_np * 1e3:8.2f}ms {t_np / t_jit:8.1f}x")


if __name__ == "__main__":
    main()
