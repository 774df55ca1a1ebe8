"""Command-line interface: parameter sweeps, system dumps, self checks."""

import argparse
import json
import sys

import numpy as np

from .elements import make_space
from .harness import (
    CASES,
    FORMATS,
    LAYOUTS,
    SweepConfig,
    build_case_system,
    emit_table,
    manufactured_rhs,
    run_sweep,
)
from .forms import assemble_mass
from .krylov import minres
from .mesh import build_unit_square
from .pressure_precond import build_mean_vector
from .systems import build_ex2


class _CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Parser that reports errors through an exception, not sys.exit."""

    def error(self, message):
        raise _CliError(message)


def _build_parser():
    parser = _Parser(prog="porofem", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True,
                              parser_class=_Parser)

    table = sub.add_parser("table",
                           help="run a parameter sweep and print a table")
    table.add_argument("--case", choices=CASES)
    table.add_argument("--N", dest="N_list", nargs="+", type=int,
                       help="mesh subdivisions (default 8 16 32)")
    table.add_argument("--lambda", dest="lambda_list", nargs="+", type=float)
    table.add_argument("--alpha", dest="alpha_list", nargs="+", type=float)
    table.add_argument("--kappa", dest="kappa_list", nargs="+", type=float)
    table.add_argument("--kappa-band", dest="kappa_band", nargs="+", type=float,
                       help="inner values on the horizontal mid band "
                            "(replaces --kappa)")
    table.add_argument("--rtol", type=float)
    table.add_argument("--max-iter", dest="max_iter", type=int)
    table.add_argument("--cond", dest="estimate_cond", action="store_const",
                       const=True, help="estimate condition numbers")
    table.add_argument("--seed", type=int)
    table.add_argument("--workers", type=int)
    table.add_argument("--allow-out-of-range", dest="allow_out_of_range",
                       action="store_const", const=True)
    table.add_argument("--format", choices=FORMATS, default="md")
    table.add_argument("--layout", choices=LAYOUTS, default="Flat")
    table.add_argument("--out", help="output file (default stdout)")
    table.add_argument("--config", help="JSON file with SweepConfig fields")

    dump = sub.add_parser("dump",
                          help="write one system as Matrix Market plus manifest")
    dump.add_argument("--case", choices=CASES, required=True)
    dump.add_argument("--N", type=int, default=8)
    dump.add_argument("--lambda", dest="lam", type=float, default=1.0)
    dump.add_argument("--alpha", type=float, default=1.0)
    dump.add_argument("--kappa", type=float, default=1.0)
    dump.add_argument("--kappa-band", dest="kappa_band", action="store_true")
    dump.add_argument("--seed", type=int, default=0)
    dump.add_argument("--out-dir", dest="out_dir", required=True)

    sub.add_parser("check",
                   help="run the self-contained invariant suite")
    return parser


def _merged_config(args):
    merged = {}
    if args.config:
        with open(args.config) as handle:
            merged.update(json.load(handle))
    for key in ("case", "N_list", "lambda_list", "alpha_list", "kappa_list",
                "rtol", "max_iter", "estimate_cond", "seed",
                "allow_out_of_range", "workers"):
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    if args.kappa_band is not None:
        merged["kappa_list"] = [("band", v) for v in args.kappa_band]
    merged.setdefault("N_list", [8, 16, 32])
    if "case" not in merged:
        raise _CliError("--case (or a config file setting it) is required")
    return SweepConfig.from_dict(merged)


def _cmd_table(args):
    config = _merged_config(args)
    rows = run_sweep(config)
    text = emit_table(rows, format=args.format, layout=args.layout)
    if args.out:
        with open(args.out, "w") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)
    failed = any(row["error"] is not None or not row["converged"] for row in rows)
    return 2 if failed else 0


def _cmd_dump(args):
    system = build_case_system(
        args.case, args.N, args.lam, args.alpha, args.kappa, args.kappa_band
    )
    system.rhs = manufactured_rhs(system, args.seed)
    path = system.dump(args.out_dir)
    print("wrote %s" % path)
    return 0


def _check_lines():
    """Yield (name, passed) pairs for the self-check suite."""
    mesh = build_unit_square(8, "all_dirichlet")
    for family in ("P1", "P2"):
        Q = make_space(mesh, family, 1)
        M = assemble_mass(Q)
        mean = build_mean_vector(Q, M)
        ones = np.ones(mean.n)
        gap = max(
            np.abs(M @ ones - mean.omega_sqrt * mean.m).max(),
            abs(mean.m @ ones - mean.omega_sqrt),
        )
        yield "rank-one mean identities (%s)" % family, gap <= 1e-13

    system = build_case_system("1", 8, 1e8, 1e-4, 1e-12)
    rhs = manufactured_rhs(system, 0)
    norm = rhs @ system.precond(rhs)
    yield "manufactured load has unit preconditioner norm", abs(norm - 1.0) <= 1e-10

    x, report = minres(system.mat, system.precond, rhs, rtol=1e-6, max_iter=500)
    history = np.array(report.residual_history)
    monotone = bool(np.all(np.diff(history) <= 1e-14))
    yield "solver converges on the stiff three-field point", report.converged
    yield "preconditioned residual history is monotone", monotone

    config = SweepConfig("2", [4], [1e4], [1.0], [1e-8], estimate_cond=True)
    rows_a = run_sweep(config)
    rows_b = run_sweep(config)
    stripped = lambda rows: [
        {k: v for k, v in row.items() if k != "wall_time_ms"} for row in rows
    ]
    yield "sweeps are deterministic", stripped(rows_a) == stripped(rows_b)

    s1 = build_ex2(build_unit_square(4, "all_dirichlet"), 1.0, "B1")
    s2 = build_ex2(build_unit_square(4, "all_dirichlet"), 1.0, "B2")
    probe = np.sin(np.arange(s1.n, dtype=float))
    gap = np.linalg.norm(s1.precond(probe) - s2.precond(probe))
    rel = gap / np.linalg.norm(s1.precond(probe))
    yield "rank-one correction vanishes at lambda 1", rel <= 1e-10


def _cmd_check(_args):
    failures = 0
    for name, passed in _check_lines():
        print("%s %s" % ("PASS" if passed else "FAIL", name))
        failures += 0 if passed else 1
    return 2 if failures else 0


def main(argv=None):
    """Entry point; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "table":
            return _cmd_table(args)
        if args.command == "dump":
            return _cmd_dump(args)
        return _cmd_check(args)
    except _CliError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
