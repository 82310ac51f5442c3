"""Compare the numba kernels with the pure-numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--n 100000] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from disbound import _kernels


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=100_000, help="number of (q, psi) pairs")
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    if not _kernels.HAVE_NUMBA:
        print("numba is not installed; only the numpy path can run")
        return

    rng = np.random.default_rng(0)
    q = rng.uniform(0.0, 0.9, size=args.n)
    psi = rng.uniform(1e-4, 0.5, size=args.n)
    ms = list(range(1, 201))

    # compile outside the timed region
    _kernels.kl_inverse_batch_numba(q[:4], psi[:4])
    _kernels.log_maurer_moment_numba(3, 0.3)

    p_numba, _ = _kernels.kl_inverse_batch_numba(q, psi)
    p_numpy, _ = _kernels.kl_inverse_batch_numpy(q, psi)
    print(f"max |numba - numpy| on kl_inverse: {np.max(np.abs(p_numba - p_numpy)):.2e}")

    cases = [
        ("kl_batch", lambda: _kernels.kl_batch_numba(q, p_numba), lambda: _kernels.kl_batch_numpy(q, p_numba)),
        ("kl_inverse_batch", lambda: _kernels.kl_inverse_batch_numba(q, psi), lambda: _kernels.kl_inverse_batch_numpy(q, psi)),
        (
            "log_maurer_moment m=1..200",
            lambda: [_kernels.log_maurer_moment_numba(m, 0.3) for m in ms],
            lambda: [_kernels.log_maurer_moment_numpy(m, 0.3) for m in ms],
        ),
    ]
    print(f"{'kernel':<28}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    for name, fast, slow in cases:
        t_fast = _best(fast, args.repeat)
        t_slow = _best(slow, args.repeat)
        print(f"{name:<28}{t_fast:>12.4f}{t_slow:>12.4f}{t_slow / t_fast:>9.1f}x")


if __name__ == "__main__":
    main()
