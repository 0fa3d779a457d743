"""Timing of the compiled and numpy versions of the hot kernels.

Run with ``python3 benchmarks/bench_kernels.py``. Each kernel is called on
inputs shaped like one Kang-Schafer replicate (n=1000) and a larger sample,
after a warm-up call so numba compilation is excluded. The script also
checks that both versions return the same numbers.
"""

import argparse
import time

import numpy as np

from gelcal import _kernels


def _time(fn, args, repeat):
    fn(*args)  # warm-up / compile
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def _gel_args(n, q, rng):
    a = rng.standard_normal((n, q))
    a /= np.abs(a).max() * q
    w = rng.uniform(0.5, 2.0, n) / n
    lam = rng.uniform(-0.3, 0.3, q)
    return a, w, lam


def _logit_args(n, p, rng):
    f = np.column_stack([np.ones(n), rng.standard_normal((n, p - 1))])
    beta = rng.normal(0, 0.3, p)
    r = (rng.uniform(size=n) < 1 / (1 + np.exp(-f @ beta))).astype(float)
    return f, r, beta


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=50)
    args = ap.parse_args(argv)
    if not _kernels.HAVE_NUMBA:
        print("numba unavailable or disabled (GELCAL_DISABLE_NUMBA); nothing to compare")
        return 0
    rng = np.random.default_rng(1)
    print(f"{'kernel':<22}{'n':>8}{'q':>4}{'numpy [us]':>14}{'numba [us]':>14}{'speedup':>10}")
    for n, q in ((1000, 4), (1000, 19), (100000, 8)):
        a, w, lam = _gel_args(n, q, rng)
        for code, name in ((0, "gel quadratic"), (1, "gel el"), (2, "gel et")):
            argsk = (a, w, lam, code, 0.0, -np.inf, 1.0 if code == 1 else np.inf)
            out_np = _kernels.gel_accumulate_np(*argsk)
            out_nb = _kernels.gel_accumulate_nb(*argsk)
            np.testing.assert_allclose(out_np[1], out_nb[1], rtol=1e-10)
            np.testing.assert_allclose(out_np[3], out_nb[3], rtol=1e-9, atol=1e-14)
            t_np = _time(_kernels.gel_accumulate_np, argsk, args.repeat)
            t_nb = _time(_kernels.gel_accumulate_nb, argsk, args.repeat)
            print(f"{name:<22}{n:>8}{q:>4}{1e6 * t_np:>14.1f}{1e6 * t_nb:>14.1f}{t_np / t_nb:>10.2f}")
        f, r, beta = _logit_args(n, min(q, 9), rng)
        out_np = _kernels.logistic_accumulate_np(f, r, beta)
        out_nb = _kernels.logistic_accumulate_nb(f, r, beta)
        np.testing.assert_allclose(out_np[0], out_nb[0], rtol=1e-10)
        np.testing.assert_allclose(out_np[2], out_nb[2], rtol=1e-9)
        t_np = _time(_kernels.logistic_accumulate_np, (f, r, beta), args.repeat)
        t_nb = _time(_kernels.logistic_accumulate_nb, (f, r, beta), args.repeat)
        print(f"{'logistic':<22}{n:>8}{f.shape[1]:>4}{1e6 * t_np:>14.1f}{1e6 * t_nb:>14.1f}{t_np / t_nb:>10.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
