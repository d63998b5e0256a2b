"""Command line entry point ``dpg``."""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .experiment import ConfigError, load_config, oracle_instances, run
from .graph import CapacityError, LatticeSpec, build_lattice, dump_graph
from .norms import DoublePhaseParams, NumericalError, check_interpolation, check_modular_norm_laws
from .norms import check_norm_equivalence
from .operator import check_green, check_monotonicity, check_operator_monotonicity
from .solvers import SolverConfig, brute_force_oracle, minimize_constrained, solve_monotone


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True), flush=True)


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.output:
        cfg.output = args.output
    try:
        return run(cfg)
    except (CapacityError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 1


def check_suite(samples: int = 1000, seed: int = 0):
    """Yield every property check report on the default test graphs."""
    g = build_lattice(LatticeSpec(2, 4))
    g3 = build_lattice(LatticeSpec(3, 2))
    a = g.norm1().astype(float)
    double = DoublePhaseParams(1.5, 2.5, a, "coercive")
    zero = DoublePhaseParams(1.5, 2.5, np.zeros(g.n_vertices), "zero")
    big = DoublePhaseParams(2.5, 4.0, 0.5 * a, "coercive")
    for gg, params in [(g, double), (g, zero), (g3, DoublePhaseParams(1.5, 2.5, g3.norm1() * 1.0))]:
        yield check_modular_norm_laws(gg, params, samples=samples, seed=seed, kind="vertex")
        yield check_modular_norm_laws(gg, params, samples=samples, seed=seed, kind="edge")
    yield check_interpolation(g, samples=samples, seed=seed)
    yield check_norm_equivalence(g, double, samples=max(samples // 2, 1), seed=seed)
    for params in (double, big):
        yield check_green(g, params, samples=max(samples // 2, 1), seed=seed)
        yield check_operator_monotonicity(g, params, samples=max(samples // 5, 1), seed=seed)
    for p in (1.2, 1.5, 1.9, 2.0, 3.0):
        yield check_monotonicity(samples=100 * samples, p=p, seed=seed)


def cmd_check(args) -> int:
    ok = True
    for rep in check_suite(args.samples, args.seed):
        print(rep.to_json(), flush=True)
        ok &= rep.passed
    return 0 if ok else 1


def oracle_comparisons(tol: float = 1e-6):
    """Solver against brute force on every instance with at most three vertices."""
    for inst in oracle_instances():
        if inst.constraint is None:
            u, rep = solve_monotone(inst.graph, inst.f, inst.params,
                                    SolverConfig(grad_tol=1e-10, check_hypotheses=False))
            ref = brute_force_oracle(inst.graph, inst.params, f=inst.f, half_width=inst.half_width)
        else:
            r, t = inst.constraint
            cfg = SolverConfig(grad_tol=1e-9, r=r, t=t, restarts=4, check_hypotheses=False)
            u, _, rep = minimize_constrained(inst.graph, inst.params, cfg, seed_delta=False)
            ref = brute_force_oracle(inst.graph, inst.params, constraint=inst.constraint,
                                     half_width=inst.half_width, center=np.abs(u))
            # the constrained problem is symmetric under u -> -u
            u = np.abs(u)
            ref = np.abs(ref)
        err = float(np.max(np.abs(u - ref)))
        yield {"instance": inst.name, "max_abs_diff": err, "passed": err <= tol,
               "solver": u.tolist(), "oracle": ref.tolist(), "converged": rep.converged}


def cmd_oracle(args) -> int:
    ok = True
    for row in oracle_comparisons(args.tol):
        _emit(row)
        ok &= row["passed"]
    return 0 if ok else 1


def cmd_dump_graph(args) -> int:
    try:
        g = build_lattice(LatticeSpec(args.N, args.R))
    except (CapacityError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    dump_graph(g, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dpg", description="Double-phase problems on lattice graphs")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run an experiment from a YAML config")
    p.add_argument("config")
    p.add_argument("-o", "--output", help="override the output directory")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("check", help="run the property checks, one JSON line per suite")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_check)
    p = sub.add_parser("oracle", help="compare solvers with brute force on tiny graphs")
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_oracle)
    p = sub.add_parser("dump-graph", help="write the debug dump of a truncated lattice")
    p.add_argument("N", type=int)
    p.add_argument("R", type=int)
    p.add_argument("out")
    p.set_defaults(func=cmd_dump_graph)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
