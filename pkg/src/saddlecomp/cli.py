"""Command-line front end.

Subcommands: ``check`` (compliance verdict and roles), ``solve`` (solve
with a certified gap or restriction bound), ``dualize`` (export the
dualized cone program as JSON), and ``demo`` (run a named demo).

Exit codes: 0 ok, 1 non-compliant, 2 parse/usage error, 3 gap too large,
4 solver failure.  The SADDLECOMP_BACKEND environment variable selects the
solver adapter.
"""

import argparse
import hashlib
import json
import sys
import time

import numpy as np

from .canon import canonicalize_dcp
from .conic import SolverOptions
from .demos import DEMO_NAMES, run_demo
from .errors import CapabilityError, DspError, ParseError
from .problemfile import load_problem_file
from .problems import (
    GAP_TOO_LARGE, NOT_DSP, SOLVED, saddle_point_programs, solve_saddle_point,
    solve_saddle_problem,
)

EXIT_OK = 0
EXIT_NONCOMPLIANT = 1
EXIT_PARSE = 2
EXIT_GAP = 3
EXIT_SOLVER = 4


def _listify(val):
    if isinstance(val, np.ndarray):
        return val.tolist()
    if isinstance(val, (np.floating, np.integer)):
        return float(val)
    return val


def _load(path):
    try:
        return load_problem_file(path)
    except ParseError as err:
        print(f"parse error: {err}", file=sys.stderr)
        raise SystemExit(EXIT_PARSE)
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        raise SystemExit(EXIT_PARSE)


def cmd_check(args):
    parsed = _load(args.path)
    prob = parsed.problem
    diags = prob.diagnostics()
    if diags:
        print("not DSP-compliant")
        for d in diags:
            print(f"  {d}")
        return EXIT_NONCOMPLIANT
    if parsed.kind == "saddle_point":
        roles = prob.roles()
        cvx = [v.name for v in roles.convex_vars]
        ccv = [v.name for v in roles.concave_vars]
        print(f"DSP-compliant; convex: {cvx}; concave: {ccv}")
    else:
        sense = "minimize" if parsed.kind == "min" else "maximize"
        print(f"DSP-compliant saddle problem ({sense})")
    return EXIT_OK


def _append_run_record(path, input_path, report, wall):
    digest = hashlib.sha256(open(input_path, "rb").read()).hexdigest()
    record = {
        "input_sha256": digest,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "status": report.status,
        "value": None if np.isnan(report.value) else float(report.value),
        "gap": None if report.gap is None else float(report.gap),
        "wall_time_s": round(wall, 6),
    }
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


def cmd_solve(args):
    parsed = _load(args.path)
    backend = parsed.solver.get("backend")
    eps = parsed.solver.get("eps")
    tol = args.tol if args.tol is not None else parsed.solver.get("tol", 1e-6)
    start = time.perf_counter()
    if parsed.kind == "saddle_point":
        report = solve_saddle_point(parsed.problem, tol=tol, backend=backend,
                                    eps=eps)
    else:
        report = solve_saddle_problem(parsed.problem, backend=backend, eps=eps)
    wall = time.perf_counter() - start
    _append_run_record(args.log, args.path, report, wall)

    variables = {name: _listify(var.value)
                 for name, var in parsed.variables.items()
                 if var.value is not None}
    if args.json:
        out = {
            "status": report.status,
            "value": None if np.isnan(report.value) else float(report.value),
            "gap": None if report.gap is None else float(report.gap),
            "tolerance": float(report.tolerance),
            "bound": report.bound,
            "backend_status": report.backend_status,
            "variables": variables,
            "diagnostics": [str(d) for d in report.diagnostics],
        }
        print(json.dumps(out, sort_keys=True))
    else:
        print(f"status: {report.status}")
        if report.status == SOLVED:
            print(f"value: {report.value:.10g}")
            if report.gap is not None:
                print(f"gap: {report.gap:.3e}")
            if report.bound:
                print(f"bound: {report.bound} "
                      "(exact when strong duality holds for the inner extrema)")
            for name, val in variables.items():
                print(f"{name} = {val}")
        elif report.status == GAP_TOO_LARGE:
            print(f"gap {report.gap:.3e} exceeds tolerance {report.tolerance:.3e}")
            print(f"dualized values disagree: v+ = {report.value:.10g}, "
                  f"v- = {report.value_mirror:.10g}")
        else:
            for d in report.diagnostics:
                print(f"  {d}")
            if report.backend_status:
                print(f"backend status: {report.backend_status}")
    if report.status == SOLVED:
        return EXIT_OK
    if report.status == GAP_TOO_LARGE:
        return EXIT_GAP
    if report.status == NOT_DSP:
        return EXIT_NONCOMPLIANT
    return EXIT_SOLVER


def cmd_dualize(args):
    parsed = _load(args.path)
    prob = parsed.problem
    diags = prob.diagnostics()
    if diags:
        print("not DSP-compliant", file=sys.stderr)
        for d in diags:
            print(f"  {d}", file=sys.stderr)
        return EXIT_NONCOMPLIANT
    if parsed.kind == "saddle_point":
        _, prog, _, _, _ = saddle_point_programs(prob)
    else:
        _, prog = canonicalize_dcp(prob.objective.expr, prob.constraints,
                                   sense=parsed.kind, check=False)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(prog.to_json())
        fh.write("\n")
    inventory = {}
    for cone in prog.cones:
        key = f"{cone.kind}({cone.dim})" if cone.kind in ("soc", "psd") \
            else cone.kind
        inventory[key] = inventory.get(key, 0) + 1
    print(f"variables: {prog.num_vars}")
    print(f"rows: {prog.A.shape[0]}")
    print("cones: " + ", ".join(f"{k} x{v}" for k, v in sorted(inventory.items())))
    return EXIT_OK


def cmd_demo(args):
    if args.name not in DEMO_NAMES:
        print(f"unknown demo {args.name!r}; choices: {', '.join(DEMO_NAMES)}",
              file=sys.stderr)
        return EXIT_PARSE
    try:
        result = run_demo(args.name)
    except CapabilityError as err:
        print(f"capability error: {err}", file=sys.stderr)
        return EXIT_SOLVER
    width = max(len(str(label)) for label, _ in result["rows"])
    print(f"demo: {result['name']}")
    for label, val in result["rows"]:
        if isinstance(val, float):
            print(f"  {label:<{width}}  {val:.6f}")
        else:
            print(f"  {label:<{width}}  {val}")
    ok = True
    for label, err in result["checks"]:
        passed = err <= 1e-4
        ok = ok and passed
        print(f"  check: {label}: {'PASS' if passed else 'FAIL'} "
              f"(discrepancy {err:.2e})")
    return EXIT_OK if ok else EXIT_SOLVER


def build_parser():
    parser = argparse.ArgumentParser(
        prog="saddlecomp",
        description="Model, check, dualize, and solve convex-concave saddle "
                    "problems.")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("check", help="verify DSP compliance and report roles")
    p.add_argument("path")
    p.set_defaults(func=cmd_check)

    p = subs.add_parser("solve", help="solve a problem file")
    p.add_argument("path")
    p.add_argument("--tol", type=float, default=None,
                   help="relative gap tolerance for saddle point problems")
    p.add_argument("--json", action="store_true",
                   help="emit a machine-readable report")
    p.add_argument("--log", default="saddlecomp_runs.jsonl",
                   help="run-record log file (JSON lines, append-only)")
    p.set_defaults(func=cmd_solve)

    p = subs.add_parser("dualize", help="export the dualized cone program")
    p.add_argument("path")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dualize)

    p = subs.add_parser("demo", help="run a named demo")
    p.add_argument("name", help=f"one of: {', '.join(DEMO_NAMES)}")
    p.set_defaults(func=cmd_demo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_PARSE if err.code not in (0, None) else 0
    try:
        return args.func(args)
    except ParseError as err:
        print(f"parse error: {err}", file=sys.stderr)
        return EXIT_PARSE
    except DspError as err:
        print(f"not DSP-compliant: {err}", file=sys.stderr)
        for d in err.diagnostics:
            print(f"  {d}", file=sys.stderr)
        return EXIT_NONCOMPLIANT
    except CapabilityError as err:
        print(f"capability error: {err}", file=sys.stderr)
        return EXIT_SOLVER
    except SystemExit as err:
        return err.code if isinstance(err.code, int) else EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
