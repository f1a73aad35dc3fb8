"""Compare the compiled and pure-Python simulator kernels on the default parameters.

    python3 benchmarks/bench_des.py --n 50
"""

import argparse

from fleetopt.bench import run_benchmark
from fleetopt.config import load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, default=50, help="replications per backend")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rows = run_benchmark(load_config().sim, n=args.n, seed=args.seed)
    base = next(r for r in rows if r["backend"] == "python")
    print(f"{'backend':8s} {'ms/sim':>9s} {'speedup':>8s}")
    for r in rows:
        print(f"{r['backend']:8s} {r['ms_per_sim']:9.2f} {base['seconds'] / r['seconds']:7.1f}x")


if __name__ == "__main__":
    main()
