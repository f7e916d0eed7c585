"""Command line front end.

    mdpcg {validate|solve|sensitivity|sweep|cycle} <file> [flags]

stdout carries only the JSON/CSV payload, stderr carries diagnostics.
Exit codes: 0 ok, 1 validation failure, 2 parse error, 3 solver failure,
4 equilibrium not strictly positive, 5 non-invertible transformation.
"""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from mdpcg import cycle, sensitivity as sens
from mdpcg.errors import (
    MdpcgError,
    NotInvertible,
    NotStrictlyPositive,
    ParseError,
    RankDeficient,
    SolverError,
)
from mdpcg.io import csv_float, dumps_result, load_game
from mdpcg.model import validate_assumptions
from mdpcg.solver import solve

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_PARSE = 2
EXIT_SOLVER = 3
EXIT_DEGENERATE = 4
EXIT_NOT_INVERTIBLE = 5

log = logging.getLogger("mdpcg")


def _emit(payload, out=None):
    (out or sys.stdout).write(dumps_result(payload))


def _fail(code, kind, message, out=None, **extra):
    print(f"mdpcg: {kind}: {message}", file=sys.stderr)
    _emit({"error": kind, "message": message, **extra}, out)
    return code


def _equilibrium_payload(spec, eq, eps):
    return {
        "y": eq.y,
        "nu": eq.nu,
        "lambda": eq.lam,
        "mu": eq.mu,
        "social_cost": float(eq.y @ spec.costs.value(eq.y, eps)),
        "kkt_residual": eq.kkt_residual,
        "wardrop_gap": eq.wardrop_gap,
        "solver": eq.solver,
        "iterations": eq.iterations,
    }


def _load(path):
    return load_game(path)


def cmd_validate(args) -> int:
    spec, _ = _load(args.file)
    report = validate_assumptions(spec)
    _emit(report.to_dict())
    if not report.ok:
        for msg in report.messages:
            print(f"mdpcg: {msg}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def _checked_spec(path):
    spec, eps = _load(path)
    report = validate_assumptions(spec)
    if not report.ok:
        raise _Invalid(report)
    return spec, eps


class _Invalid(Exception):
    def __init__(self, report):
        super().__init__("; ".join(report.messages))
        self.report = report


def cmd_solve(args) -> int:
    spec, eps = _checked_spec(args.file)
    eq = solve(spec, eps, tol=args.tol, method=args.solver)
    if eq.kkt_residual > args.tol:
        return _fail(EXIT_SOLVER, "SolverError",
                     f"KKT residual {eq.kkt_residual:.3e} above tolerance {args.tol:.3e}",
                     **_equilibrium_payload(spec, eq, eps))
    _emit(_equilibrium_payload(spec, eq, eps))
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    spec, eps = _checked_spec(args.file)
    eq = solve(spec, eps, tol=args.tol)
    res = sens.sensitivity(spec, eq, eps)
    payload = _equilibrium_payload(spec, eq, eps)
    payload.update(
        grad_J=res.dJ_deps,
        dy_deps=res.dy_deps,
        dl_deps=res.dl_deps,
        ddual_deps=res.ddual_deps,
        braess=sens.braess_from_gradient(res.dJ_deps).to_dict(),
    )
    _emit(payload)
    return EXIT_OK


def _direction(args, K):
    if args.arc is not None:
        if not 1 <= args.arc <= K:
            raise ParseError(f"--arc must lie in 1..{K}")
        d = np.zeros(K)
        d[args.arc - 1] = 1.0
        return d
    try:
        d = np.array([float(v) for v in args.direction.split(",")])
    except ValueError as exc:
        raise ParseError(f"bad --direction: {exc}") from None
    if d.size != K:
        raise ParseError(f"--direction needs {K} comma-separated values")
    if np.any(d < 0):
        raise ParseError("--direction must be nonnegative")
    return d


def cmd_sweep(args) -> int:
    spec, eps = _checked_spec(args.file)
    direction = _direction(args, spec.num_arcs)
    if args.max < 0:
        raise ParseError("--max must be nonnegative")
    if args.steps < 2 and args.max != 0:
        raise ParseError("--steps must be at least 2")
    table = sens.SweepTable(direction)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        out.write(",".join(table.header()) + "\n")
        ts = sens.sweep_grid(args.max, args.steps)
        try:
            for row in sens.iter_sweep(spec, direction, ts, eps):
                fields = [row.eps, row.social_cost, row.pred_dJ, row.lam]
                line = [csv_float(v) for v in fields] + [str(row.assumption4_ok).lower()]
                line += [csv_float(v) for v in row.y]
                out.write(",".join(line) + "\n")
                out.flush()
        except MdpcgError as exc:
            out.write("# aborted\n")
            out.flush()
            print(f"mdpcg: {type(exc).__name__}: {exc}", file=sys.stderr)
            return EXIT_SOLVER
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_cycle(args) -> int:
    spec, eps = _checked_spec(args.file)
    primal = cycle.derive_primal_graph(spec, args.edge_order)
    trans = cycle.build_transformation(spec, primal)
    if not trans.invertible:
        return _fail(EXIT_NOT_INVERTIBLE, "NotInvertible",
                     f"T is {trans.T.shape[0]}x{trans.T.shape[1]} and not invertible",
                     num_edges=primal.num_edges, num_arcs=spec.num_arcs)
    eq = solve(spec, eps)
    cyc = cycle.map_equilibrium(spec, eq, primal, trans, eps)
    bound = cycle.stochasticity_bound_check(spec, eq, eps, args.edge_order)
    _emit({
        "edges": [[a + 1, b + 1] for a, b in primal.edges],
        "D": primal.D,
        "T": trans.T,
        "sigma_max": trans.sigma_max,
        "y": eq.y,
        "z": cyc.z,
        "cycle_kkt_residual": cyc.residual,
        "grad_J": bound.grad_mdp,
        "grad_J_cycle": bound.grad_cycle,
        "theorem2": {"lhs": bound.lhs, "rhs": bound.rhs, "holds": bound.holds},
    })
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mdpcg", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check connectivity, incidence rank and cost monotonicity")
    p.add_argument("file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve", help="compute the Wardrop equilibrium")
    p.add_argument("file")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--solver", choices=["auto", "kkt", "fw"], default="auto")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sensitivity", help="equilibrium Jacobians and Braess check")
    p.add_argument("file")
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("sweep", help="re-solve along a cost perturbation ray (CSV)")
    p.add_argument("file")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--arc", type=int, help="1-based hyperarc to perturb")
    g.add_argument("--direction", help="comma-separated nonnegative direction")
    p.add_argument("--max", type=float, required=True, help="largest perturbation size")
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--out", help="write CSV here instead of stdout")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("cycle", help="primal graph, transformation T and sensitivity bound")
    p.add_argument("file")
    p.add_argument("--edge-order", choices=["appearance", "lexicographic"], default="appearance")
    p.set_defaults(func=cmd_cycle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except ParseError as exc:
        return _fail(EXIT_PARSE, "ParseError", str(exc))
    except OSError as exc:
        return _fail(EXIT_PARSE, "ParseError", f"cannot read {args.file}: {exc.strerror}")
    except _Invalid as exc:
        print(f"mdpcg: validation failed: {exc}", file=sys.stderr)
        _emit(exc.report.to_dict())
        return EXIT_INVALID
    except NotStrictlyPositive as exc:
        extra = {"y": exc.y} if exc.y is not None else {}
        return _fail(EXIT_DEGENERATE, "NotStrictlyPositive", str(exc), **extra)
    except NotInvertible as exc:
        return _fail(EXIT_NOT_INVERTIBLE, "NotInvertible", str(exc),
                     num_edges=exc.num_edges, num_arcs=exc.num_arcs)
    except (SolverError, RankDeficient) as exc:
        return _fail(EXIT_SOLVER, type(exc).__name__, str(exc))
    except MdpcgError as exc:
        return _fail(EXIT_SOLVER, type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
