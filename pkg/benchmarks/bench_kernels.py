#!/usr/bin/env python3
"""Compare the numba and pure-numpy conv1d kernels.

Times the three kernel entry points (forward, input gradient, weight
gradient) over a grid of sequence lengths and kernel widths, and prints a
table with the speedup of numba over numpy.  Run from an installed
environment:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --lengths 128 512 --repeats 9
"""

import argparse
import statistics
import time

import numpy as np

from convqa.kernels import conv_numpy

try:
    from convqa.kernels import conv_numba
except ImportError:
    conv_numba = None


def time_call(fn, *args, repeats):
    """Median seconds per call; one untimed warmup for jit compilation."""
    fn(*args)
    times = []
    for _ in range(repeats):
        tick = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - tick)
    return statistics.median(times)


def bench_case(impl, length, kernel_width, channels_in, channels_out,
               repeats, seed=0):
    rng = np.random.default_rng(seed)
    xpad = rng.normal(size=(length + kernel_width - 1, channels_in)) \
        .astype(np.float32)
    weight = rng.normal(size=(kernel_width, channels_in, channels_out)) \
        .astype(np.float32)
    bias = rng.normal(size=channels_out).astype(np.float32)
    out = np.empty((length, channels_out), dtype=np.float32)
    gy = rng.normal(size=(length, channels_out)).astype(np.float32)
    gxpad = np.zeros_like(xpad)
    gweight = np.zeros_like(weight)
    return {
        "forward": time_call(impl.conv1d_forward, xpad, weight, bias, out,
                             repeats=repeats),
        "grad_input": time_call(impl.conv1d_grad_input, gy, weight, gxpad,
                                repeats=repeats),
        "grad_weight": time_call(impl.conv1d_grad_weight, xpad, gy, gweight,
                                 repeats=repeats),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--lengths", type=int, nargs="+",
                        default=[64, 256, 1024])
    parser.add_argument("--kernel-widths", type=int, nargs="+",
                        default=[3, 5, 20])
    parser.add_argument("--channels-in", type=int, default=128)
    parser.add_argument("--channels-out", type=int, default=128)
    parser.add_argument("--repeats", type=int, default=7)
    args = parser.parse_args()

    if conv_numba is None:
        print("numba is not installed; only the numpy timings follow.\n")

    header = "%6s %4s %12s %12s %12s %9s" % (
        "length", "K", "kernel", "numpy (ms)", "numba (ms)", "speedup")
    print(header)
    print("-" * len(header))
    for length in args.lengths:
        for kernel_width in args.kernel_widths:
            base = bench_case(conv_numpy, length, kernel_width,
                              args.channels_in, args.channels_out,
                              args.repeats)
            fast = None
            if conv_numba is not None:
                fast = bench_case(conv_numba, length, kernel_width,
                                  args.channels_in, args.channels_out,
                                  args.repeats)
            for name in ("forward", "grad_input", "grad_weight"):
                numpy_ms = 1000.0 * base[name]
                if fast is None:
                    print("%6d %4d %12s %12.3f %12s %9s"
                          % (length, kernel_width, name, numpy_ms, "-", "-"))
                else:
                    numba_ms = 1000.0 * fast[name]
                    print("%6d %4d %12s %12.3f %12.3f %8.1fx"
                          % (length, kernel_width, name, numpy_ms, numba_ms,
                             numpy_ms / numba_ms))
        print()


if __name__ == "__main__":
    main()
