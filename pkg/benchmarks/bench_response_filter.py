"""Benchmark the response-integral kernel: numba JIT vs pure Python/numpy.

Run:  python3 benchmarks/bench_response_filter.py
"""

import time

import numpy as np

from rydcav.kernels import NUMBA_ENABLED, _response_filter_py, response_filter


def timeit(fn, *args, repeats=5):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    rng = np.random.default_rng(0)
    for n in (10_000, 100_000, 1_000_000):
        chi = 2e4 * np.sin(np.linspace(0, 8 * np.pi, n)) * rng.standard_normal()
        z = (-7.4e5 - 1j * chi).astype(np.complex128)
        dt = 5e-8
        b0 = complex(-1.0 / z[0])

        t_py, out_py = timeit(_response_filter_py, z, dt, b0)
        if NUMBA_ENABLED:
            response_filter(z[:16], dt, b0)  # compile outside the timer
            t_jit, out_jit = timeit(response_filter, z, dt, b0)
            err = np.max(np.abs(out_jit - out_py))
            print(
                f"n={n:>9,d}  python {t_py*1e3:8.2f} ms   numba {t_jit*1e3:8.2f} ms"
                f"   speedup {t_py/t_jit:6.1f}x   max|diff| {err:.2e}"
            )
        else:
            print(f"n={n:>9,d}  python {t_py*1e3:8.2f} ms   (numba disabled)")


if __name__ == "__main__":
    main()
