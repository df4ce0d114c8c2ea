"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 20]

The first numba call (compilation) is excluded from the timings.
"""
import argparse
import timeit

import numpy as np

from modecal import kernels


def cases(rng):
    n, k = 10_000, 8
    modes = (rng.normal(size=k), np.array([-0.08, -0.04, -0.3]), rng.random((n, k)) * 5,
             rng.random((n, k)) * 40 + 1, rng.poisson(0.5, (n, k)).astype(float), 1 + rng.random(k), rng.random(n))
    kde = (rng.random((64, 8)), rng.random((120, 8)), 0.05 + rng.random(8) * 0.2, rng.normal(size=120))
    B = rng.normal(size=(6, 6))
    L = np.linalg.cholesky(B @ B.T + 6 * np.eye(6))
    dA = rng.normal(size=(48, 6, 6))
    jvp = (L, dA + dA.transpose(0, 2, 1))
    return {
        "choose_modes (10k agents)": (kernels.choose_modes_np, kernels.choose_modes_nb, modes),
        "kde_logpdf (64 x 120 x 8)": (kernels.kde_logpdf_np, kernels.kde_logpdf_nb, kde),
        "cholesky_jvp (q=6, 48 dirs)": (kernels.cholesky_jvp_np, kernels.cholesky_jvp_nb, jvp),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    print(f"{'kernel':30s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for name, (f_np, f_nb, a) in cases(np.random.default_rng(0)).items():
        f_nb(*a)  # compile
        t_np = min(timeit.repeat(lambda: f_np(*a), number=1, repeat=args.repeat)) * 1e3
        t_nb = min(timeit.repeat(lambda: f_nb(*a), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:30s} {t_np:10.3f} {t_nb:10.3f} {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
