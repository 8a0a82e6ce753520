"""Compare the compiled and numpy kernels on the reference scenario.

    python benchmarks/bench_backends.py [--instances 10] [--repeat 3]

Prints per-backend wall time for full WMMSE solves and for one grid-oracle
search, plus the largest objective difference between the two backends.
"""

import argparse
import time

import numpy as np

from nomafd import _backend
from nomafd.baselines import grid_oracle
from nomafd.channel import (ScenarioConfig, budgets_from_config, fairness_weights,
                            generate_channels, generate_scenario)
from nomafd.wmmse import SolverConfig, solve


def instances(n, **overrides):
    cfg = ScenarioConfig(**overrides)
    out = []
    for seed in range(n):
        sc = generate_scenario(cfg, seed)
        out.append((generate_channels(sc), fairness_weights(sc).alpha, budgets_from_config(cfg)))
    return out


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - t0)
    return min(times), result


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--instances", type=int, default=10)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--grid-points", type=int, default=60)
    args = ap.parse_args()

    names = ["numpy"] + (["compiled"] if _backend.has_compiled() else [])
    if len(names) == 1:
        print("compiled core not available; timing the numpy kernels only")
    cfg = SolverConfig()
    solves = instances(args.instances)
    tiny = instances(1, num_uplink=1, num_downlink=2, num_subcarriers=1)[0]

    results = {}
    print(f"{'backend':<10} {'solve x' + str(args.instances):>12} {'grid oracle':>12}")
    for name in names:
        k = _backend.get_kernels(name)
        t_solve, objs = best_of(
            lambda: [solve(H, a, b, cfg, kernels=k).weighted_sum_rate for H, a, b in solves],
            args.repeat)
        t_grid, _ = best_of(lambda: grid_oracle(*tiny, grid_points=args.grid_points, kernels=k),
                            args.repeat)
        results[name] = (t_solve, t_grid, np.array(objs))
        print(f"{name:<10} {t_solve:>11.3f}s {t_grid:>11.3f}s")
    if len(names) == 2:
        (ts_n, tg_n, on), (ts_c, tg_c, oc) = results["numpy"], results["compiled"]
        print(f"speedup    {ts_n / ts_c:>11.1f}x {tg_n / tg_c:>11.1f}x")
        print(f"max relative objective difference: {np.max(np.abs(oc - on) / np.abs(on)):.2e}")


if __name__ == "__main__":
    main()
