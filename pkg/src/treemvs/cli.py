"""``tree-mvs`` command-line front end.

Commands: ``check``, ``solve``, ``study``, ``simulate``. One JSON config
document drives every command; flags override document keys with a notice
on stderr. Every command that writes output also writes
``<out>.manifest.json`` describing the run.

Exit codes: 0 success (``check``: Solvable), 1 invalid input, 2 Unsolvable,
3 Undetermined, 4 non-convergence or runaway episode, 5 memory budget.
"""
import argparse
import csv
import json
import platform
import sys
import time

import numpy as np

from treemvs import __version__, _backend, game, solver, tree
from treemvs.coefficients import SOLVABLE, UNSOLVABLE, classify_solvability
from treemvs.config import load_config
from treemvs.errors import (
    MemoryBudgetError,
    NonConvergenceError,
    RunawayEpisodeError,
    TreeMVSError,
)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_UNSOLVABLE = 2
EXIT_UNDETERMINED = 3
EXIT_NONCONVERGENCE = 4
EXIT_MEMORY = 5

DEFAULTS = {
    "tol": solver.DEFAULT_TOL,
    "method": "auto",
    "max_sweeps": solver.DEFAULT_MAX_SWEEPS,
    "max_nodes": solver.DEFAULT_MAX_VALUES,
    "seed": 0,
    "episodes": 10_000,
    "start": "@",
    "board": 1,
}


class _UsageError(Exception):
    pass


def _g(x):
    return "%.17g" % x


def _resolve(args, cfg, keys, required=()):
    """Merge flags over document keys over defaults; flags win, noisily."""
    out = {}
    doc = cfg.extras
    for key in keys:
        flag = getattr(args, key, None)
        if flag is not None:
            if key in doc and doc[key] != flag:
                print(f"note: --{key.replace('_', '-')}={flag} overrides config {key}={doc[key]}", file=sys.stderr)
            out[key] = flag
        elif key in doc:
            out[key] = doc[key]
        elif key in DEFAULTS:
            out[key] = DEFAULTS[key]
        elif key in required:
            raise _UsageError(f"{key} missing: give --{key.replace('_', '-')} or set it in the config")
        else:
            out[key] = None
    return out


def _write_manifest(args, params, outputs, started, extra=None):
    manifest = {
        "command": args.command,
        "config": args.config,
        "parameters": params,
        "outputs": outputs,
        "backend": _backend.get().NAME,
        "threads": _backend.threads(),
        "wall_clock_seconds": round(time.perf_counter() - started, 6),
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    if extra:
        manifest.update(extra)
    path = args.out + ".manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def cmd_check(args, cfg, boundary, started):
    report = classify_solvability(cfg)
    lines = report.lines()
    for line in lines:
        print(line)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        _write_manifest(args, {}, [args.out], started, {"verdict": report.overall})
    if report.overall == SOLVABLE:
        return EXIT_OK
    if report.overall == UNSOLVABLE:
        return EXIT_UNSOLVABLE
    return EXIT_UNDETERMINED


def write_field_csv(path, fld):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("component", "node", "level", "psi", "value"))
        for i, node, k, psi, v in fld.rows():
            w.writerow((i + 1, tree.format_node(node), k, _g(psi), _g(v)))


def write_study_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("L", "component", "root_value", "delta", "component_gap"))
        for r in rows:
            w.writerow((r.L, r.component + 1, _g(r.root_value), _g(r.delta), _g(r.component_gap)))


def cmd_solve(args, cfg, boundary, started):
    p = _resolve(args, cfg, ("depth", "tol", "method", "max_sweeps", "max_nodes"), required=("depth",))
    fld = solver.solve(cfg, boundary, p["depth"], method=p["method"], tol=p["tol"],
                       max_sweeps=p["max_sweeps"], max_values=p["max_nodes"])
    print(f"method {fld.method}  depth {fld.L}  sweeps {fld.iterations}  residual {fld.residual:.3e}")
    write_field_csv(args.out, fld)
    _write_manifest(args, p, [args.out], started,
                    {"solver": fld.method, "sweeps": fld.iterations, "residual": fld.residual})
    return EXIT_OK


def cmd_study(args, cfg, boundary, started):
    p = _resolve(args, cfg, ("depths", "tol", "max_sweeps", "max_nodes"), required=("depths",))
    rows = solver.convergence_study(cfg, boundary, p["depths"], tol=p["tol"], max_sweeps=p["max_sweeps"],
                                    max_values=p["max_nodes"])
    for r in rows:
        print(f"L={r.L:3d}  component {r.component + 1}  root {r.root_value:.12f}  "
              f"delta {r.delta:+.3e}  gap {r.component_gap:.6f}")
    write_study_csv(args.out, rows)
    _write_manifest(args, p, [args.out], started)
    return EXIT_OK


def cmd_simulate(args, cfg, boundary, started):
    p = _resolve(args, cfg, ("depth", "tol", "method", "max_nodes", "seed", "episodes", "start", "board"),
                 required=("depth",))
    board = p["board"]
    if not 1 <= board <= cfg.N:
        raise _UsageError(f"board must be in 1..{cfg.N}, got {board}")
    start = game.GameState(tree.parse_node(p["start"], cfg.m), board - 1)
    fld = solver.solve(cfg, boundary, p["depth"], method=p["method"], tol=p["tol"], max_values=p["max_nodes"])
    est = game.estimate_value(cfg, boundary, start, p["depth"], p["episodes"], p["seed"], fld=fld)
    print(f"mean {est.mean:.10f}  stderr {est.stderr:.3e}  solver {est.solver_value:.10f}  z {est.z_score:+.3f}")
    game.write_estimates(args.out, [est])
    outputs = [args.out]
    if args.trace_out:
        _, trace = game.simulate_episode(cfg, boundary, start, game.greedy_strategy(fld), p["depth"], p["seed"])
        game.write_trace(args.trace_out, trace)
        outputs.append(args.trace_out)
    _write_manifest(args, p, outputs, started)
    return EXIT_OK


def _depths(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON config document")
    common.add_argument("--out", help="output path (a manifest is written next to it)")
    common.add_argument("--seed", type=int)
    common.add_argument("--tol", type=float)
    common.add_argument("--depth", type=int)
    common.add_argument("--method", choices=("exact", "fixed-point", "auto"))
    common.add_argument("--max-nodes", dest="max_nodes", type=int, help="cap on stored values (N x vertices)")
    common.add_argument("--max-sweeps", dest="max_sweeps", type=int)

    parser = argparse.ArgumentParser(prog="tree-mvs", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("check", parents=[common], help="classify solvability")
    sub.add_parser("solve", parents=[common], help="solve at one depth, write the field CSV")
    st = sub.add_parser("study", parents=[common], help="root values over several depths")
    st.add_argument("--depths", type=_depths, help="e.g. 8,10,12,14")
    sm = sub.add_parser("simulate", parents=[common], help="Monte Carlo value estimate")
    sm.add_argument("--episodes", type=int)
    sm.add_argument("--start", help="start node in dotted notation, '@' for the root")
    sm.add_argument("--board", type=int, help="start board, 1-based")
    sm.add_argument("--trace-out", dest="trace_out", help="CSV trace of episode 0")
    return parser


COMMANDS = {"check": cmd_check, "solve": cmd_solve, "study": cmd_study, "simulate": cmd_simulate}


def main(argv=None):
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    if args.command != "check" and not args.out:
        print(f"error: {args.command} needs --out", file=sys.stderr)
        return EXIT_INPUT
    try:
        cfg, boundary = load_config(args.config)
        return COMMANDS[args.command](args, cfg, boundary, started)
    except (NonConvergenceError, RunawayEpisodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except MemoryBudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MEMORY
    except (TreeMVSError, _UsageError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
