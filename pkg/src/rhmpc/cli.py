"""Command-line entry point: ``rhmpc {simulate,compare,gradcheck,solve-ocp}``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import ocp, presets
from .config import build, load_config, merge_config
from .errors import ConfigError, DegenerateReferenceError, DivergenceError
from .metrics import compare
from .plant import run_closed_loop

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_NONCONVERGENCE = 4

GRADCHECK_TOL = 1e-5

log = logging.getLogger("rhmpc")


def _setup_logging():
    level = os.environ.get("RHMPC_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR), format="%(levelname)s %(name)s: %(message)s")
    if level not in levels:
        log.error("unknown RHMPC_LOG level %r; using 'error'", level)


def _load(path):
    return load_config(path) if path else merge_config()


def cmd_simulate(config_path: Optional[str], controller: Optional[str] = None, out: Optional[str] = None,
                 seed: Optional[int] = None) -> int:
    cfg = _load(config_path)
    setup = build(cfg, seed=seed)
    trace = run_closed_loop(setup.plant, setup.controller(controller), setup.scenario, setup.dt_sample,
                            seed=setup.seed)
    path = out or cfg["output"]["trace"]
    trace.to_csv(path)
    print(f"wrote {len(trace)} samples to {path}")
    return EXIT_OK


def cmd_compare(config_path: Optional[str], out: Optional[str] = None, seed: Optional[int] = None,
                controller: Optional[str] = None, baseline: str = "pid") -> int:
    cfg = _load(config_path)
    setup = build(cfg, seed=seed)
    test_kind = controller or "rmpc"
    runs = {}
    for kind in dict.fromkeys((test_kind, baseline)):
        runs[kind] = run_closed_loop(setup.plant, setup.controller(kind), setup.scenario, setup.dt_sample,
                                     seed=setup.seed)
    try:
        report = compare(runs[test_kind], runs[baseline], setup.events, setup.weights)
    except DegenerateReferenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    path = out or cfg["output"]["report"]
    report.to_csv(path)
    print(f"{test_kind} vs {baseline}")
    print(report.table())
    return EXIT_OK


def cmd_gradcheck(preset: str) -> int:
    try:
        battery = presets.gradcheck_battery(preset)
    except KeyError:
        print(f"error: unknown preset '{preset}' (choose from {', '.join(presets.PRESET_NAMES)})", file=sys.stderr)
        return EXIT_CONFIG
    worst = 0.0
    for p, u, xi in battery:
        ga, xa = ocp.gradient(p, u, xi, mode="adjoint")
        gf, xf = ocp.gradient(p, u, xi, mode="finite_difference")
        a = np.concatenate([ga.ravel(), xa])
        f = np.concatenate([gf.ravel(), xf])
        scale = max(float(np.max(np.abs(f), initial=0.0)), float(np.max(np.abs(a), initial=0.0)))
        dev = 0.0 if scale == 0.0 else float(np.max(np.abs(a - f))) / scale
        worst = max(worst, dev)
    print(f"preset {preset}: {len(battery)} instance(s), max relative deviation {worst:.3e}")
    return EXIT_OK if worst < GRADCHECK_TOL else EXIT_NONCONVERGENCE


def cmd_solve_ocp(preset: str, max_iters: Optional[int] = None) -> int:
    if preset not in presets.SOLVE_PRESETS:
        print(f"error: unknown preset '{preset}' (choose from {', '.join(presets.SOLVE_PRESETS)})", file=sys.stderr)
        return EXIT_CONFIG
    pre = presets.SOLVE_PRESETS[preset]()
    opts = ocp.SolveOptions() if max_iters is None else ocp.SolveOptions(max_iters=max_iters)
    res = ocp.solve(pre.problem, pre.u0, pre.xi0, opts)
    u = np.array2string(res.u_star.values.ravel(), precision=6)
    print(f"preset {preset}: {pre.description}")
    print(f"f* = {res.f_star:.8g}")
    print(f"u* = {u}")
    print(f"iterations = {res.iterations}")
    print(f"constraint violation = {res.constraint_violation:.3e}")
    print(f"converged = {str(res.converged).lower()}")
    return EXIT_OK if res.converged else EXIT_NONCONVERGENCE


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rhmpc", description="Receding-horizon MPC benchmark harness")
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one closed loop and write the trace CSV")
    sim.add_argument("--config")
    sim.add_argument("--out")
    sim.add_argument("--controller", choices=("rmpc", "pid"))
    sim.add_argument("--seed", type=int)

    cmp_ = sub.add_parser("compare", help="run test and reference controllers and write the index report")
    cmp_.add_argument("--config")
    cmp_.add_argument("--out")
    cmp_.add_argument("--controller", choices=("rmpc", "pid"), help="test controller (default rmpc)")
    cmp_.add_argument("--baseline", choices=("rmpc", "pid"), default="pid", help="reference controller")
    cmp_.add_argument("--seed", type=int)

    gc = sub.add_parser("gradcheck", help="compare adjoint and finite-difference gradients")
    gc.add_argument("preset")

    so = sub.add_parser("solve-ocp", help="solve a built-in optimal control problem")
    so.add_argument("preset")
    so.add_argument("--max-iters", type=int)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args.config, args.controller, args.out, args.seed)
        if args.command == "compare":
            return cmd_compare(args.config, args.out, args.seed, args.controller, args.baseline)
        if args.command == "gradcheck":
            return cmd_gradcheck(args.preset)
        return cmd_solve_ocp(args.preset, args.max_iters)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE


if __name__ == "__main__":
    sys.exit(main())
