"""Time the compiled and numpy derivative kernels on the same inputs.

    python3 benchmarks/bench_kernels.py [--n 1024] [--repeats 5]

Prints one line per (d, order, backend) with the median wall time and the
speedup of the compiled kernel, after checking both agree to 1e-10.
"""

import argparse
import time

import numpy as np

from ffca import kernels
from ffca.model import init_model, with_smoothed_activations

ORDERS = {"gradient": kernels.ORDER_GRADIENT, "diagonal": kernels.ORDER_DIAGONAL, "full": kernels.ORDER_FULL}


def median_time(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=1024)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--dims", type=int, nargs="+", default=[8, 32, 64])
    p.add_argument("--hidden", type=int, nargs="+", default=[32, 32])
    args = p.parse_args(argv)

    if "compiled" not in kernels.BACKENDS:
        print("compiled extension not built; only the numpy backend is available")
    print(f"{'d':>4} {'order':>9} {'backend':>9} {'seconds':>10} {'speedup':>8}")
    for d in args.dims:
        m = with_smoothed_activations(init_model([d, *args.hidden, 1], 0), 10.0)
        X = np.random.default_rng(0).uniform(size=(args.n, d))
        idx = np.zeros(args.n, dtype=np.int64)
        W, b = m.weights, m.biases
        for name, order in ORDERS.items():
            results, times = {}, {}
            for backend in kernels.BACKENDS:
                def call(backend=backend):
                    return kernels.derivatives(W, b, kernels.SOFTPLUS, 10.0, X, idx, order, backend)
                results[backend] = call()
                times[backend] = median_time(call, args.repeats)
            if len(results) == 2:
                for a, c in zip(results["python"], results["compiled"]):
                    if a is not None:
                        np.testing.assert_allclose(a, c, rtol=1e-10, atol=1e-10)
            for backend, t in times.items():
                speed = times["python"] / t if backend != "python" else 1.0
                print(f"{d:>4} {name:>9} {backend:>9} {t:>10.5f} {speed:>8.2f}")


if __name__ == "__main__":
    main()
