"""Compare the compiled and numpy sampling kernels.

Run with ``python benchmarks/bench_kernels.py [--repeat N]``.  Every timed
call is also checked for bitwise agreement between the backends.
"""

import argparse
import time

import numpy as np

from qest import kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - start)
    return min(times), out


def cases():
    cdf = kernels.cdf_from_probs(np.full(16, 1 / 16))
    streams = np.arange(20_000)
    est = np.random.default_rng(0).uniform(0, 2 * np.pi, size=(2000, 1000))
    return [
        ("uniforms 20000x50", lambda m: kernels.uniforms(1, streams, 50, module=m)),
        ("categorical 20000x50, 16 outcomes", lambda m: kernels.sample_categorical(cdf, 1, streams, 50, module=m)),
        ("counts 2000 streams x 4096 draws", lambda m: kernels.sample_counts(cdf, 1, streams[:2000], 4096, module=m)),
        ("circular sq errors 2e6", lambda m: kernels.sq_errors(est, 1.0, 2 * np.pi, module=m)),
    ]


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args()
    mods = kernels.backends()
    names = sorted(mods)
    print(f"backends: {', '.join(names)}; threads: {kernels.thread_count()}")
    print(f"{'case':40s}" + "".join(f"{n:>12s}" for n in names) + f"{'speedup':>10s}")
    for label, fn in cases():
        results = {n: best_of(lambda: fn(mods[n]), args.repeat) for n in names}
        if len(names) > 1:
            assert all(np.array_equal(results[names[0]][1], results[n][1]) for n in names[1:]), label
        row = f"{label:40s}" + "".join(f"{results[n][0] * 1e3:10.1f}ms" for n in names)
        if "cython" in results:
            row += f"{results['python'][0] / results['cython'][0]:9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
