"""Compare the compiled and pure-Python CBM Monte Carlo kernels.

Usage: python3 benchmarks/bench_kernels.py [--trials 200000]
"""

import argparse
import time

import numpy as np

from teleshare.bsm import BsmNoise
from teleshare.encoding import EncodingParams
from teleshare.kernels import MCConfig, available_backends, cbm_trials

CASES = [
    ("n=2 p=2 eta=0.1", MCConfig(EncodingParams.parity(2, 2), noise=BsmNoise(eta=0.1))),
    ("n=3 p=3 eta=0.05 eps=0.02", MCConfig(EncodingParams.parity(3, 3), noise=BsmNoise(eta=0.05, epsilon=0.02))),
    ("n=4 p=5 eta=0.1", MCConfig(EncodingParams.parity(4, 5), noise=BsmNoise(eta=0.1))),
]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int, default=200_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    backends = available_backends()
    print(f"backends: {', '.join(backends)}; trials: {args.trials}")
    for name, cfg in CASES:
        timings, outputs = {}, {}
        for b in backends:
            t0 = time.perf_counter()
            outputs[b] = cbm_trials(cfg, args.trials, args.seed, backend=b)
            timings[b] = time.perf_counter() - t0
        same = all(np.array_equal(outputs[backends[0]], o) for o in outputs.values())
        line = "  ".join(f"{b} {timings[b]:.3f}s" for b in backends)
        if "compiled" in timings:
            line += f"  speedup x{timings['python'] / timings['compiled']:.1f}"
        print(f"{name:28s} {line}  identical={same}")


if __name__ == "__main__":
    main()
