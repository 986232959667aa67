"""Command-line entry point: ``spectral-weights {optimize,estimate,demo,compare}``."""
from __future__ import annotations

import argparse
import json
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import bench
from .eig import extremes
from .estimators import DEFAULT_SEED, _reseed, fiedler_config, fiedler_eigpair, largest_eigpair, unit_extremes
from .graph import GraphError, bfs_diameter, laplacian, load_graph, node_weighted_laplacian, paper7
from .optimizer import AugLagParams, outer_solve, write_csvs
from .protocols import estimate_diameter

EXIT_OK, EXIT_ERROR, EXIT_UNCONVERGED = 0, 1, 2


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(message)


def default_seed() -> int:
    env = os.environ.get("SPECTRAL_WEIGHTS_SEED")
    if env is None:
        return DEFAULT_SEED
    try:
        return int(env)
    except ValueError:
        raise CliError(f"SPECTRAL_WEIGHTS_SEED must be an integer, got {env!r}") from None


def read_weights(path) -> np.ndarray:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read weights file: {exc}") from None
    try:
        vals = [float(tok) for tok in re.split(r"[\s,]+", text.strip()) if tok]
    except ValueError:
        raise CliError(f"{path}: weights must be numbers separated by whitespace or commas") from None
    return np.array(vals)


def _graph(args):
    if args.graph is None:
        return paper7()
    try:
        return load_graph(args.graph)
    except OSError as exc:
        raise CliError(f"cannot read graph: {exc}") from None
    except GraphError as exc:
        raise CliError(f"{args.graph}: {exc}") from None


def _params(args) -> AugLagParams:
    try:
        return AugLagParams(rho=args.rho, gamma=args.gamma, t_max=args.t_max, seed=args.seed)
    except ValueError as exc:
        raise CliError(str(exc)) from None


def _print_summary(summary: dict, out=None):
    out = out or sys.stdout
    for key in ("status", "kappa", "lambda_2", "lambda_N", "sigma", "iterations",
                "multiplier_updates", "inner_rounds"):
        val = summary[key]
        print(f"{key:<20} {val:.6f}" if isinstance(val, float) else f"{key:<20} {val}", file=out)
    print(f"{'weights':<20} " + " ".join(f"{w:.4f}" for w in summary["weights"]), file=out)


def cmd_optimize(args) -> int:
    g = _graph(args)
    trace = outer_solve(g, _params(args), args.mode, args.engine)
    paths = write_csvs(trace, args.out_dir)
    summary = trace.summary()
    summary.update(engine=args.engine, mode=args.mode, seed=args.seed)
    (Path(args.out_dir) / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    _print_summary(summary)
    print("wrote " + ", ".join(str(p) for p in paths))
    if not trace.converged:
        print("warning: multiplier did not settle within the update budget", file=sys.stderr)
        return EXIT_UNCONVERGED
    return EXIT_OK


def cmd_estimate(args) -> int:
    g = _graph(args)
    size = g.n if args.mode == "node" else g.m
    w = read_weights(args.weights) if args.weights else np.ones(size)
    if w.shape != (size,) or np.any(w <= 0):
        raise CliError(f"expected {size} strictly positive {args.mode} weights")
    diam = estimate_diameter(g)
    unit = unit_extremes(g, diam.value, seed=args.seed)
    x0 = _reseed(g.n, args.seed, 0)
    top = largest_eigpair(g, w, x0, diam.value, kind=args.mode, unit=unit, seed=args.seed)
    cfg = fiedler_config(g, w, top.value, diam.value, kind=args.mode)
    low = fiedler_eigpair(g, w, cfg, x0, diam.value, kind=args.mode, unit=unit, seed=args.seed)
    lam2, lamN = extremes(g, w, args.mode)
    rows = [("lambda_2", low.value, lam2), ("lambda_N", top.value, lamN),
            ("kappa", top.value / low.value, lamN / lam2)]
    print(f"{'quantity':<10} {'distributed':>14} {'oracle':>14} {'rel.err':>10}")
    for name, est_v, ora in rows:
        print(f"{name:<10} {est_v:>14.6f} {ora:>14.6f} {abs(est_v - ora) / abs(ora):>10.2e}")
    print(f"diameter estimate {diam.value} (exact {bfs_diameter(g)}, {diam.rounds_used} rounds)")
    print(f"rounds            {top.rounds + low.rounds}")
    return EXIT_OK


def cmd_demo(args) -> int:
    if args.which == "consensus":
        return _demo_consensus(args)
    return _demo_dof(args)


def _demo_consensus(args) -> int:
    g = _graph(args)
    rng = np.random.default_rng(args.seed)
    x0 = rng.standard_normal(g.n)
    if args.weights:
        w = read_weights(args.weights)
        if w.shape != (g.n,) or np.any(w <= 0):
            raise CliError(f"expected {g.n} strictly positive node weights")
        label = "given"
    else:
        w = bench.central_solve(g).weights
        label = "optimized"
    for name, L in (("unit", laplacian(g)), (label, node_weighted_laplacian(g, w))):
        ev = np.sort(np.linalg.eigvals(L).real)
        r_star, rho_star = bench.optimal_consensus_step(ev[1], ev[-1])
        traj = bench.simulate_avg_consensus(L, r_star, x0, args.steps)
        rate = bench.decay_rate(traj, bench.consensus_value(L, x0))
        print(f"{name:<10} kappa {ev[-1] / ev[1]:.4f}  r* {r_star:.4f}  rho* {rho_star:.4f}  measured {rate:.4f}")
    return EXIT_OK


def _demo_dof(args) -> int:
    g = _graph(args)
    which = ["unweighted", "optimized"] if args.gains == "both" else [args.gains]
    rng = np.random.default_rng(args.seed)
    x0 = rng.standard_normal((g.n, bench.PLANT.A.shape[0]))
    for name in which:
        L = bench.matching_laplacian(g, name)
        ctrl = bench.GAINS[name]
        lams = np.sort(np.linalg.eigvals(L).real)[1:]
        radius = bench.closed_loop_radius(bench.PLANT, ctrl, lams).max()
        run = bench.simulate_dof_closedloop(L, bench.PLANT, ctrl, x0, args.steps, noise_seed=args.noise_seed)
        prefix = "unweighted" if name == "unweighted" else "weighted"
        bench.write_dof_csvs(run, args.out_dir, prefix)
        line = f"{name:<11} closed-loop radius {radius:.4f}  final disagreement {run.disagreement()[-1]:.3e}"
        if args.noise_seed is not None:
            zero = bench.simulate_dof_closedloop(L, bench.PLANT, ctrl, np.zeros_like(x0), args.steps,
                                                 noise_seed=args.noise_seed)
            line += f"  energy ratio {zero.energy_ratio():.4e} (certified gain {ctrl.gamma})"
        print(line)
    return EXIT_OK


def cmd_compare(args) -> int:
    g = _graph(args)
    params = _params(args)
    dist = outer_solve(g, params, args.mode, "distributed")
    orc = outer_solve(g, params, args.mode, "oracle")
    kd, ko = dist.kappa[-1], orc.kappa[-1]
    print(f"distributed kappa {kd:.6f}  ({dist.steps} steps, {sum(dist.rounds)} rounds)")
    print(f"oracle      kappa {ko:.6f}  ({orc.steps} steps)")
    print(f"relative gap      {abs(kd - ko) / ko:.4%}")
    return EXIT_OK if dist.converged and orc.converged else EXIT_UNCONVERGED


def build_parser() -> argparse.ArgumentParser:
    seed = default_seed()
    p = _Parser(prog="spectral-weights", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, graph_required=True):
        sp.add_argument("--graph", required=graph_required, help="edge-list file (header 'N M', 1-based)")
        sp.add_argument("--seed", type=int, default=seed)

    def solver(sp):
        sp.add_argument("--mode", choices=("node", "edge"), default="node")
        sp.add_argument("--gamma", type=float, default=1e-3)
        sp.add_argument("--rho", type=float, default=20.0)
        sp.add_argument("--t-max", type=int, default=750)

    sp = sub.add_parser("optimize", help="minimise the condition number")
    common(sp)
    solver(sp)
    sp.add_argument("--engine", choices=("distributed", "oracle"), default="distributed")
    sp.add_argument("--out-dir", default="out")
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("estimate", help="distributed eigenvalue estimates next to the oracle")
    common(sp)
    sp.add_argument("--mode", choices=("node", "edge"), default="node")
    sp.add_argument("--weights", help="file with one weight per node (or edge)")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("demo", help="consensus or output-feedback demo")
    sp.add_argument("which", choices=("consensus", "dof"))
    common(sp, graph_required=False)
    sp.add_argument("--weights", help="node weights for the consensus demo")
    sp.add_argument("--gains", choices=("unweighted", "optimized", "both"), default="both")
    sp.add_argument("--noise-seed", type=int, default=None)
    sp.add_argument("--steps", type=int, default=None)
    sp.add_argument("--out-dir", default="out")
    sp.set_defaults(func=cmd_demo)

    sp = sub.add_parser("compare", help="run both engines and report the gap")
    common(sp)
    solver(sp)
    sp.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "demo":
            # without --graph the demos run on the built-in 7-node topology
            if args.steps is None:
                args.steps = 80 if args.which == "consensus" else 200
            if args.steps < 1:
                raise CliError("--steps must be positive")
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
