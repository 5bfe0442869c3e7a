"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--repeat N] [--json out.json]

Each kernel is timed on identical inputs under every importable backend;
the table reports the best-of-N wall time and the speedup over Python.
"""
from __future__ import annotations

import argparse
import json
import timeit

import numpy as np

from semfml.kernels import backends


def workloads(rng):
    cost = rng.normal(size=(20, 40))
    big = rng.normal(size=(60, 120))
    ratios = rng.uniform(0.1, 50.0, size=200)
    K = 50
    cycles = rng.uniform(1e5, 1e6, K)
    cap = rng.uniform(1e-29, 5e-28, K)
    fmax = rng.uniform(1e8, 2e9, K)
    return {
        "linear_assignment 20x40": lambda m: m.linear_assignment(cost),
        "linear_assignment 60x120": lambda m: m.linear_assignment(big),
        "bisect_qhat x200": lambda m: [m.bisect_qhat(r, 100.0) for r in ratios],
        "sp1_candidates K=50": lambda m: m.sp1_candidates(cycles, cap, fmax, 1.0, 1.0),
    }


def run(repeat: int = 5, seed: int = 0) -> list[dict]:
    mods = backends()
    rows = []
    for name, fn in workloads(np.random.default_rng(seed)).items():
        row = {"kernel": name}
        for label, mod in mods.items():
            timer = timeit.Timer(lambda: fn(mod))
            n, _ = timer.autorange()
            row[label] = min(timer.repeat(repeat=repeat, number=n)) / n
        if "cython" in row:
            row["speedup"] = row["python"] / row["cython"]
        rows.append(row)
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", default=None, help="also write results to this file")
    args = ap.parse_args(argv)
    rows = run(args.repeat)
    print(f"{'kernel':28s} {'python':>12s} {'cython':>12s} {'speedup':>8s}")
    for r in rows:
        cy = f"{r['cython'] * 1e6:10.1f}us" if "cython" in r else f"{'n/a':>12s}"
        sp = f"{r['speedup']:7.1f}x" if "speedup" in r else f"{'':>8s}"
        print(f"{r['kernel']:28s} {r['python'] * 1e6:10.1f}us {cy} {sp}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
