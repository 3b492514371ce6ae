"""Compare the numba and pure-numpy simulation backends.

    python benchmarks/bench_kernels.py --episodes 100 --slots 100 --repeat 5
"""
import argparse
import time

import numpy as np

from isda import kernels
from isda.baselines import run_pure_csma, run_whittle_oracle
from isda.mac import Scenario, three_terminal_scenario, run_episodes, stream
from isda.model import TerminalConfig


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--episodes", type=int, default=100, help="episodes per batch (one CE iteration)")
    ap.add_argument("--slots", type=int, default=100)
    ap.add_argument("--long-slots", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    sc = three_terminal_scenario()
    homog = Scenario([TerminalConfig("aoi", 0.1)] * 3)
    rng = np.random.default_rng(0)
    params = [rng.normal(size=(args.episodes, s.param_count)) for s in sc.net_shapes(5)]
    rngs = lambda: [stream(0, 0, 1, e) for e in range(args.episodes)]
    cases = {
        "episodes (policy nets)": lambda: run_episodes(sc, params, args.slots, rngs()),
        "long run (pure CSMA)": lambda: run_pure_csma(sc, 1 / 3, args.long_slots, stream(0, 2)),
        "long run (Whittle oracle)": lambda: run_whittle_oracle(homog, args.long_slots, stream(0, 2)),
    }
    backends = ["numba", "numpy"] if kernels.HAVE_NUMBA else ["numpy"]
    results = {}
    for name in backends:
        with kernels.use_backend(name):
            for label, fn in cases.items():
                fn()  # warm-up, includes JIT compilation
                results[name, label] = best_of(fn, args.repeat)

    print(f"{'case':28s}" + "".join(f"{b:>12s}" for b in backends) + ("     speedup" if len(backends) == 2 else ""))
    for label in cases:
        row = f"{label:28s}" + "".join(f"{results[b, label]:11.4f}s" for b in backends)
        if len(backends) == 2:
            row += f"{results['numpy', label] / results['numba', label]:11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
