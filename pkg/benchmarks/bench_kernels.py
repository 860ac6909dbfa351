#!/usr/bin/env python3
"""Benchmark the numba and numpy kernel backends on serving/fitting shapes.

Outputs JSON: per kernel, per backend min/mean seconds and the speedup.
Shapes mirror the real hot paths: a 50k-row likelihood+gradient pass
(one optimizer iteration), the ~3.4k-cell two-parameter pricing sweep,
and batch reference-price/probability evaluation.
"""

import argparse
import json
import sys
import time

import numpy as np

from schedprice.kernels import numpy_impl

try:
    from schedprice.kernels import numba_impl
except ImportError:
    numba_impl = None

N_ROWS = 50_000
N_OPTIONS = 14
N_PARAMS = 11       # 3 trend + 4 beta + 4 gamma buckets
GRID_CELLS = 3_400
WARMUP_RUNS = 2
BENCH_RUNS = 7
SEED = 42


def make_inputs(rng):
    prices = rng.uniform(5, 25, size=(N_ROWS, N_OPTIONS))
    offered = rng.random((N_ROWS, N_OPTIONS)) > 0.1
    offered[:, 0] = True
    chosen = rng.integers(0, N_OPTIONS + 1, size=N_ROWS)
    chosen = np.where(offered[np.arange(N_ROWS), np.maximum(chosen - 1, 0)], chosen, 0)
    feats = rng.normal(0, 1, size=(N_ROWS, N_OPTIONS, N_PARAMS))
    theta = rng.normal(0, 0.1, size=N_PARAMS)
    weekday = np.array([0, 1, 2, 3, 4, 7, 8, 9, 10, 11], dtype=np.int64)
    weekend = np.array([5, 6, 12, 13], dtype=np.int64)
    L = N_OPTIONS
    beta = rng.uniform(0.05, 0.2, size=L)
    gamma = rng.uniform(0.0, 0.08, size=L)
    grid_side = int(np.sqrt(GRID_CELLS / 2))
    sweep = dict(
        m1_grid=np.linspace(0, 30, grid_side),
        m2_grid=np.linspace(-10, 30, grid_side),
        costs=rng.uniform(4, 12, size=L),
        markup_offset=1.0 / (beta + gamma),
        floor=np.full(L, 2.0),
        ceiling=np.full(L, 40.0),
        trend=rng.normal(0, 0.3, size=L),
        beta=beta,
        gamma=gamma,
        offered=np.ones(L, dtype=bool),
        weekday_order=weekday,
        weekend_idx=weekend,
        keep_prob=rng.uniform(0.7, 1.0, size=L),
        alpha_mix=0.0,
    )
    util = feats @ theta
    return {
        "reference_prices_batch": (prices, weekday, weekend),
        "mnl_probabilities": (np.ascontiguousarray(util), offered),
        "mnl_nll_grad": (theta, feats, offered, chosen.astype(np.int64)),
        "two_param_objective_grid": sweep,
    }


def bench(fn, args, runs=BENCH_RUNS, warmup=WARMUP_RUNS):
    call = (lambda: fn(**args)) if isinstance(args, dict) else (lambda: fn(*args))
    for _ in range(warmup):
        call()
    times = []
    for _ in range(runs):
        start = time.perf_counter()
        call()
        times.append(time.perf_counter() - start)
    return {"min": min(times), "mean": sum(times) / len(times), "runs": runs}


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--output", "-o", help="write JSON here instead of stdout")
    parser.add_argument("--runs", type=int, default=BENCH_RUNS)
    args = parser.parse_args()

    rng = np.random.default_rng(SEED)
    inputs = make_inputs(rng)
    backends = {"numpy": numpy_impl}
    if numba_impl is not None:
        backends["numba"] = numba_impl
    else:
        print("numba unavailable; benchmarking numpy only", file=sys.stderr)

    results = {
        "shapes": {
            "rows": N_ROWS,
            "options": N_OPTIONS,
            "params": N_PARAMS,
            "grid_cells": GRID_CELLS,
        },
        "kernels": {},
    }
    for name, call_args in inputs.items():
        entry = {}
        for backend_name, impl in backends.items():
            entry[backend_name] = bench(getattr(impl, name), call_args, runs=args.runs)
        if "numba" in entry:
            entry["speedup_numba_vs_numpy"] = entry["numpy"]["min"] / entry["numba"]["min"]
        results["kernels"][name] = entry

    payload = json.dumps(results, indent=2)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(payload)
        print(f"wrote {args.output}", file=sys.stderr)
    else:
        print(payload)


if __name__ == "__main__":
    main()
