"""Compare the numba and numpy kernels.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5]

Times Hermite interpolation of a 2000-point window (the window-supremum hot
path) and one comparison-oracle instance on each backend, and checks that the
two backends agree.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from safestab import _kernels as K


def _hermite_data(rng, samples=501, queries=2001, dim=3):
    t = np.linspace(-1.0, 0.0, samples)
    x = rng.normal(size=(samples, dim))
    dl = rng.normal(size=(samples - 1, dim))
    dr = rng.normal(size=(samples - 1, dim))
    q = np.linspace(-1.0, 0.0, queries)
    return t, x, dl, dr, q


def _oracle_data(steps=1000):
    xs = np.linspace(-1.0, 10.0, 2001)
    return (xs, xs.copy(), xs, 0.5 * xs, 0.2, 0.6, np.ones(101), 100, 0.01, steps)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not K.HAVE_NUMBA:
        print("numba unavailable (or disabled): only the numpy backend is timed")
    rng = np.random.default_rng(0)
    hd = _hermite_data(rng)
    od = _oracle_data()
    cases = [
        ("hermite_many (2000 queries)", K.hermite_many_np, getattr(K, "hermite_many_nb", None), hd, 200),
        ("comparison_pair (1000 steps)", K.comparison_pair_np, getattr(K, "comparison_pair_nb", None), od, 3),
    ]
    print(f"{'kernel':32s} {'numpy [ms]':>12s} {'numba [ms]':>12s} {'speedup':>8s} {'max diff':>10s}")
    for name, f_np, f_nb, data, number in cases:
        t_np = min(timeit.repeat(lambda: f_np(*data), number=number, repeat=args.repeat)) / number
        if K.HAVE_NUMBA and f_nb is not None:
            r_nb = f_nb(*data)  # compile outside the timed region
            t_nb = min(timeit.repeat(lambda: f_nb(*data), number=number, repeat=args.repeat)) / number
            r_np = f_np(*data)
            diff = float(np.max(np.abs(np.asarray(r_np) - np.asarray(r_nb))))
            print(f"{name:32s} {1e3 * t_np:12.3f} {1e3 * t_nb:12.3f} {t_np / t_nb:8.1f} {diff:10.2e}")
        else:
            print(f"{name:32s} {1e3 * t_np:12.3f} {'-':>12s} {'-':>8s} {'-':>10s}")


if __name__ == "__main__":
    main()
