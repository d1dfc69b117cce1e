"""Command-line interface: ``apgm {gen-table,solve,condense,bench,envelope}``.

Exit codes: 0 success, 1 usage error, 2 data/schema error, 3 numerical
failure (including solves stopped by the iteration cap or divergence guard).
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from . import bench_stats, io, param_table
from . import precondition as pre
from .dual_pgm import SolverOptions, solve
from .mpc_condense import SlaterViolation, condense, constant_term, dare_residual
from .randgen import GenerationError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text):
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _alpha(text):
    try:
        val = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"alpha must be an integer, got {text!r}") from None
    if val < 2:
        raise argparse.ArgumentTypeError(f"alpha must be >= 2, got {val}")
    return val


def _positive_int(text):
    try:
        val = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if val < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {val}")
    return val


def _positive_float(text):
    try:
        val = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not val > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {val}")
    return val


def _table_dir():
    return Path(os.environ.get("APGM_TABLE_DIR", "."))


def _load_or_build_table(alpha, path=None):
    if path is not None:
        table = param_table.load_table(path)
        if table.alpha != alpha:
            raise io.SchemaError("--table", f"table order {table.alpha} does not match --alpha {alpha}")
        return table
    cached = _table_dir() / f"alpha{alpha}.tbl"
    if cached.exists():
        table = param_table.load_table(cached)
        if table.alpha == alpha:
            return table
    return None


def cmd_gen_table(args):
    table = param_table.build_table(args.alpha, args.length)
    out = Path(args.out) if args.out else _table_dir() / f"alpha{args.alpha}.tbl"
    param_table.save_table(table, out)
    if args.csv:
        param_table.export_csv(table, args.csv)
    t = table.taus
    res = max((param_table.residual(table.alpha, t[i], t[i + 1]) for i in range(len(t) - 1)), default=0.0)
    p = np.arange(1, len(t) + 1)
    lb_ok = bool(np.all(t >= (p + table.alpha - 1) / table.alpha))
    mono = bool(np.all(np.diff(t) > 0))
    print(f"wrote {out}: alpha={table.alpha} length={table.length}")
    print(f"max relative residual {res:.3e}; lower bound {'ok' if lb_ok else 'VIOLATED'}; "
          f"monotone {'ok' if mono else 'VIOLATED'}")
    return EXIT_OK


def cmd_solve(args):
    problem = io.read_problem(args.problem)
    table = _load_or_build_table(args.alpha, args.table)
    opts = SolverOptions(alpha=args.alpha, stop_tol=args.stop_tol, max_iters=args.max_iters,
                         record_history=args.history)
    if args.precondition:
        target, factor = pre.transform(problem)
        res = solve(target, table, opts)
        res.xi_star = pre.recover(factor, res.xi_star)
        if res.history is not None:
            res.history["xi"] = np.array([pre.recover(factor, x) for x in res.history["xi"]])
    else:
        res = solve(problem, table, opts)
    io.write_json(res.to_dict(), args.out)
    if not res.converged:
        print(f"solver stopped: {res.stop_reason} after {res.iterations} iterations "
              f"{res.diagnostics}".rstrip(), file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_condense(args):
    spec = io.read_mpc(args.mpc)
    x0 = np.asarray(args.x0, dtype=float)
    if x0.size != spec.n:
        raise io.SchemaError("--x0", f"expected {spec.n} values, got {x0.size}")
    try:
        problem = condense(spec, x0)
    except SlaterViolation as exc:
        print(f"Slater violation at constraint row {exc.row}: {exc}", file=sys.stderr)
        return EXIT_DATA
    c = constant_term(spec, x0)
    extra = {"c": c, "m": spec.m}
    if spec.P_from_dare:
        extra["P"] = spec.P.tolist()
        extra["note"] = "terminal weight P computed via DARE"
        print(f"P computed via DARE (residual {dare_residual(spec.A, spec.B, spec.Q, spec.R, spec.P):.2e})",
              file=sys.stderr)
    io.write_problem(problem, args.out, **extra)
    print(f"vars/cons: {problem.n_v}/{problem.n_c}", file=sys.stderr if args.out in (None, "-") else sys.stdout)
    return EXIT_OK


def cmd_bench(args):
    report = bench_stats.run_suite(
        scales=args.scales, alphas=args.alphas, instances_per_scale=args.count, seed=args.seed,
        jobs=args.jobs, N=args.horizon, stop_tol=args.stop_tol, max_iters=args.max_iters,
        precondition=args.precondition, terminal=args.terminal, x0_radius=args.x0_radius,
        slater=args.slater, reference=args.reference, check_bounds=not args.no_bounds,
    )
    out = bench_stats.write_report(report, args.outdir)
    for (scale, alpha), agg in report.aggregates.items():
        print(f"n=m={scale} alpha={alpha}: ave.iter {agg['ave_iter']:.2f} ave.time {agg['ave_time']:.5f}s")
    for row in report.ttests:
        print(f"n=m={row['scale']} {row['alpha_pair']} {row['metric']}: t={row['t']:.4f} (M={row['M']})")
    print(f"report written to {out}")
    return EXIT_OK


def cmd_envelope(args):
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(["p", "alpha", "U_p"])
        for a in args.alphas:
            for p in range(1, args.pmax + 1):
                w.writerow([p, a, f"{param_table.envelope(a, p):.17g}"])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="apgm", description="Accelerated dual proximal gradient QP solver.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-table", help="generate a momentum-parameter table")
    p.add_argument("--alpha", type=_alpha, required=True)
    p.add_argument("--length", type=_positive_int, default=param_table.DEFAULT_LENGTH)
    p.add_argument("--out", help="binary table path (default $APGM_TABLE_DIR/alpha<A>.tbl)")
    p.add_argument("--csv", help="also export the table as CSV")
    p.set_defaults(func=cmd_gen_table)

    def solver_flags(q):
        q.add_argument("--alpha", type=_alpha, default=2)
        q.add_argument("--stop-tol", type=_positive_float, default=1e-3)
        q.add_argument("--max-iters", type=_positive_int, default=100_000)
        q.add_argument("--precondition", action="store_true", help="solve in Cholesky coordinates")

    p = sub.add_parser("solve", help="solve a QP given as JSON")
    p.add_argument("--problem", required=True)
    solver_flags(p)
    p.add_argument("--history", action="store_true", help="include per-iteration history")
    p.add_argument("--table", help="binary table file to use")
    p.add_argument("--out", help="result JSON path (default stdout)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("condense", help="condense an MPC spec JSON into a QP JSON")
    p.add_argument("--mpc", required=True)
    p.add_argument("--x0", type=_float_list, required=True, help="comma-separated initial state")
    p.add_argument("--out", help="problem JSON path (default stdout)")
    p.set_defaults(func=cmd_condense)

    p = sub.add_parser("bench", help="run the random MPC benchmark suite")
    p.add_argument("--scales", type=_int_list, default=[2, 4, 6, 8])
    p.add_argument("--alphas", type=_int_list, default=[2, 20])
    p.add_argument("--count", type=_positive_int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--outdir", default="bench_out")
    p.add_argument("--horizon", type=_positive_int, default=5)
    p.add_argument("--stop-tol", type=_positive_float, default=1e-3)
    p.add_argument("--max-iters", type=_positive_int, default=100_000)
    p.add_argument("--precondition", action="store_true")
    p.add_argument("--terminal", action="store_true", help="add terminal rows Phi = F")
    p.add_argument("--x0-radius", type=_positive_float, default=1.0)
    p.add_argument("--slater", choices=["lp", "zero-input"], default="lp")
    p.add_argument("--reference", choices=["auto", "oracle", "none"], default="auto")
    p.add_argument("--no-bounds", action="store_true", help="skip bound-violation counting")
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("envelope", help="tabulate the bound envelope U_p")
    p.add_argument("--alphas", type=_int_list, default=list(range(2, 21)))
    p.add_argument("--pmax", type=_positive_int, default=10)
    p.add_argument("--out")
    p.set_defaults(func=cmd_envelope)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "alphas", None) and any(a < 2 for a in args.alphas):
        parser.error("every alpha must be >= 2")
    try:
        return args.func(args)
    except (io.SchemaError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ArithmeticError, GenerationError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
