"""Compare the compiled and pure-numpy kernel backends.

Times one full-tree Jacobi sweep and a batch of game episodes on each
backend, checks that both produce identical results, and prints a table.

    python benchmarks/bench_kernels.py [--depth 14] [--episodes 100000] [--repeat 5]
"""
import argparse
import time

import numpy as np

from treemvs import _backend, game, solver
from treemvs.averaging import AveragingOperator
from treemvs.coefficients import Constant, Geometric
from treemvs.config import BoundaryData, Polynomial, SystemConfig


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_sweep(cfg, boundary, L, backend, repeat):
    fld = solver.solve_fixed_point(cfg, boundary, L, tol=1e-3, backend="python")
    tables = cfg.tables(L)
    return best_of(lambda: solver.jacobi_sweep(cfg, fld, backend=backend, tables=tables).values, repeat)


def bench_episodes(cfg, boundary, L, episodes, backend, repeat):
    fld = solver.solve(cfg, boundary, L)
    strat = game.greedy_strategy(fld)
    start = game.GameState((), 0)
    return best_of(lambda: game.run_episodes(cfg, boundary, start, strat, L, 1, episodes, backend=backend), repeat)


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--depth", type=int, default=14)
    ap.add_argument("--episodes", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    backends = ["python"] + (["cython"] if _backend.compiled is not None else [])
    geo = Geometric(0.5, 0.5)
    line = BoundaryData((Polynomial((0.0, 1.0)), Polynomial((1.0, -1.0))))
    cases = {
        "sweep midrange/mean": SystemConfig.two_board(2, geo, geo, Constant(0.25), Constant(0.25)),
        "sweep pmean(4)/median_mean, m=3": SystemConfig.two_board(
            3, geo, geo, Constant(0.25), Constant(0.25),
            F=AveragingOperator("pmean", 3, p=4.0), G=AveragingOperator("median_mean", 3, alpha=0.5)),
    }
    print(f"threads={_backend.threads()}  depth={args.depth}  episodes={args.episodes}  best of {args.repeat}")
    print(f"{'case':36s} {'backend':8s} {'seconds':>10s} {'speedup':>8s}  identical")
    for name, cfg in cases.items():
        L = args.depth if cfg.m == 2 else max(args.depth - 5, 2)
        results = {b: bench_sweep(cfg, line, L, b, args.repeat) for b in backends}
        report(name, results)
    game_cfg = SystemConfig.two_board(2, geo, geo)
    results = {b: bench_episodes(game_cfg, BoundaryData.constants(0.0, 1.0), 10, args.episodes, b, args.repeat)
               for b in backends}
    report("episodes (two boards, L=10)", results)


def report(name, results):
    base_t, base_out = results["python"]
    for b, (t, out) in results.items():
        same = np.array_equal(out, base_out)
        print(f"{name:36s} {b:8s} {t:10.4f} {base_t / t:8.1f}x  {same}")


if __name__ == "__main__":
    main()
