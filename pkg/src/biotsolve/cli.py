"""``biot-bench``: reproduce the solver-comparison tables."""

from __future__ import annotations

import argparse
import logging
import sys
from fractions import Fraction

from .assembly import PhysicalParams, assemble_system
from .bench import DEFAULT_SOLVERS, SOLVER_IDS, TABLE_PARAMS, run_table
from .mesh import build_structured_mesh
from .spectral import infsup_spectrum, schur_spectrum, spectrum_csv


def _int_list(text):
    return [int(t) for t in text.split(",") if t.strip()]


def _solver_list(text):
    ids = [t.strip().lower() for t in text.split(",") if t.strip()]
    bad = [t for t in ids if t not in SOLVER_IDS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown solver id(s) {bad}; choose from {','.join(SOLVER_IDS)}")
    return ids


def _fraction(text):
    return float(Fraction(text))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="biot-bench", description=__doc__)
    ap.add_argument("--table", type=int, choices=sorted(TABLE_PARAMS), default=1)
    ap.add_argument("--nx", type=_int_list, default=[16, 32, 64], help="comma-separated mesh sizes")
    ap.add_argument("--solvers", type=_solver_list, default=list(DEFAULT_SOLVERS), help=",".join(SOLVER_IDS))
    ap.add_argument("--tol", type=float, default=1e-6)
    ap.add_argument("--maxit", type=int, default=3000)
    ap.add_argument("--omega", type=float, default=2.5)
    ap.add_argument("--anderson-m", type=int, default=5)
    ap.add_argument("--droptol", type=float, default=1e-3)
    ap.add_argument("--shift-a", type=float, default=10.0)
    ap.add_argument("--shift-s", type=float, default=0.0)
    ap.add_argument("--eps", type=_fraction, default=None, help="stabilization constant, e.g. 1/6 or 1/4")
    ap.add_argument("--fe", choices=["mini", "p1p1"], default="mini")
    ap.add_argument("--out", default=None, help="CSV output path (default: stdout)")
    ap.add_argument("--report", default=None, help="write one JSON SolveReport per line to this path")
    ap.add_argument("--export-mm", default=None, metavar="DIR", help="dump blocks and load vectors as Matrix Market")
    ap.add_argument("--spectral", action="store_true", help="eigenvalue bounds instead of solves (nx <= 16)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s", stream=sys.stderr)

    if args.spectral:
        p = TABLE_PARAMS[args.table]
        params = PhysicalParams(**p, eps_stab=args.eps if args.eps is not None else (1 / 6 if args.fe == "mini" else 0.25))
        reports = []
        for nx in args.nx:
            system = assemble_system(build_structured_mesh(nx), params, fe=args.fe)
            case = f"table{args.table}"
            reports.append(schur_spectrum(system, case).merge(infsup_spectrum(system, case)))
        text = spectrum_csv(reports)
    else:
        reports = [] if args.report else None
        text = run_table(
            args.table,
            args.nx,
            args.solvers,
            reports=reports,
            export_mm=args.export_mm,
            tol=args.tol,
            maxit=args.maxit,
            omega=args.omega,
            anderson_m=args.anderson_m,
            droptol=args.droptol,
            shift_a=args.shift_a,
            shift_s=args.shift_s,
            eps_stab=args.eps,
            fe=args.fe,
        )
        if args.report:
            with open(args.report, "w") as fh:
                for r in reports:
                    fh.write(r.to_json() + "\n")

    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
