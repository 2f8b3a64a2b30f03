#!/usr/bin/env python3
"""Throughput benchmark: compiled trajectory kernel vs NumPy fallback.

Runs the same shard workload through both backends, checks that they
agree on the acceptance decisions (the stream contract makes the draws
bit-identical), and reports trajectories per second.

Usage::

    python benchmarks/benchmark_mc.py [--trajectories N] [--repeats R]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from heraldsqueeze import _backend
from heraldsqueeze.gate import CutoffRule, solved_config
from heraldsqueeze.gaussian import AncillaSpec, db_to_r, db_to_variance, vacuum
from heraldsqueeze.montecarlo import build_kernel_params


def bench(kernel, params, n, repeats):
    best = float("inf")
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = kernel.run_shard(params, 12345, 0, n, None, 4096, False)
        best = min(best, time.perf_counter() - t0)
    return best, result


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--trajectories", type=int, default=2_000_000,
                        help="trajectories per timed run (default 2e6)")
    parser.add_argument("--repeats", type=int, default=3,
                        help="timed repeats, best-of (default 3)")
    args = parser.parse_args()

    anc = AncillaSpec(v_sq=db_to_variance(6.0), v_asq=1.0 / db_to_variance(6.0))
    cfg = solved_config(db_to_r(2.0), anc, 1.5, CutoffRule("coverage", 0.98))
    params = build_kernel_params(cfg, vacuum(1))

    rows = []
    for name in ("numpy", "cython"):
        try:
            kernel = _backend.get_backend(name)
        except ImportError:
            print(f"{name:>8}: not available (compiled extension not built)")
            continue
        dt, res = bench(kernel, params, args.trajectories, args.repeats)
        rows.append((name, dt, res))
        print(f"{name:>8}: {args.trajectories / dt / 1e6:7.2f} M trajectories/s "
              f"({dt * 1e3:7.1f} ms, accepted {res.accepted}/{res.processed})")

    if len(rows) == 2:
        (_, dt_np, r_np), (_, dt_cy, r_cy) = rows
        same = (r_np.accepted == r_cy.accepted
                and np.allclose(r_np.block_sum_m.sum(axis=0),
                                r_cy.block_sum_m.sum(axis=0), rtol=1e-12))
        print(f"{'speedup':>8}: {dt_np / dt_cy:7.2f} x   "
              f"(backends agree: {'yes' if same else 'NO'})")
        if not same:
            return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
