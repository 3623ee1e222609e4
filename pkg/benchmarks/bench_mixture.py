"""Timing comparison of the compiled and numpy mixture kernels.

Both backends compute the exact mixture noise prediction; the compiled
one exists because the sampler calls it hundreds of times per run. This
script checks they agree, then reports per-call time and speedup over a
few problem sizes. Run as ``python3 benchmarks/bench_mixture.py``.
"""

import argparse
import time

import numpy as np

from ptdiff._mixture_np import eps_kernel as eps_np

try:
    from ptdiff._mixture_cy import eps_kernel as eps_cy
except ImportError:
    eps_cy = None

SIZES = [
    (4, 64),      # 1x8x8 latent, small mixture
    (8, 256),     # 1x16x16 latent, the bundled pattern set
    (8, 1024),    # 2x16x16 or 1x32x32
    (64, 4096),   # stress case
]


def time_kernel(kernel, z, means, log_w, sigma, a, calls, repeats):
    """Median seconds per call over ``repeats`` batches of ``calls``."""
    best = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(calls):
            kernel(z, means, log_w, sigma, a)
        best.append((time.perf_counter() - t0) / calls)
    best.sort()
    return best[len(best) // 2]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--calls", type=int, default=200, help="calls per batch")
    ap.add_argument("--repeats", type=int, default=5, help="batches per size")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    if eps_cy is None:
        print("compiled kernel not built; nothing to compare")
        return 1

    gen = np.random.default_rng(args.seed)
    print(f"{'K':>4} {'n':>6} {'numpy us':>10} {'cython us':>10} {'speedup':>8}")
    for k, n in SIZES:
        means = gen.standard_normal((k, n))
        log_w = np.log(np.full(k, 1.0 / k))
        z = gen.standard_normal(n)
        a = 0.37

        e_np, r_np = eps_np(z, means, log_w, 1.0, a)
        e_cy, r_cy = eps_cy(z, means, log_w, 1.0, a)
        # summation order differs between the backends, so the gap grows
        # slowly with n; 1e-8 relative is still far below sampler noise
        np.testing.assert_allclose(e_cy, e_np, rtol=1e-8, atol=1e-10)
        np.testing.assert_allclose(r_cy, r_np, rtol=1e-8, atol=1e-10)

        t_np = time_kernel(eps_np, z, means, log_w, 1.0, a, args.calls, args.repeats)
        t_cy = time_kernel(eps_cy, z, means, log_w, 1.0, a, args.calls, args.repeats)
        print(f"{k:>4} {n:>6} {t_np * 1e6:>10.1f} {t_cy * 1e6:>10.1f} "
              f"{t_np / t_cy:>8.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
