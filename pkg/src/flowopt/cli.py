"""Command-line interface.

Subcommands:
  run            execute a YAML experiment config
  sweep          run a norm sweep assembled from flags
  verify         run the built-in property suites
  list-problems  show the problem catalog with certificates
  bounds         evaluate settling-time bounds from flags

Exit codes: 0 all checks passed, 1 usage/config error, 2 a dominance or
Lyapunov check failed.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import yaml

from . import analysis, flows, harness, problems as pb, verify


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with code 2; we map usage errors to 1
        raise CliError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="flowopt", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_run = sub.add_parser("run", help="run a YAML experiment config")
    p_run.add_argument("config", type=Path)
    _add_override_flags(p_run)

    p_sweep = sub.add_parser("sweep", help="run a norm sweep from flags")
    p_sweep.add_argument("--problem", required=True)
    p_sweep.add_argument("--problem-args", default=None, help="inline YAML map of problem parameters")
    p_sweep.add_argument("--flow", required=True)
    p_sweep.add_argument("--norms", required=True, help="comma-separated initial-condition norms")
    p_sweep.add_argument("--bounds", default="", help="comma-separated bound tags to verify")
    p_sweep.add_argument("--name", default="sweep")
    p_sweep.add_argument("--c1", type=float, default=1.0)
    p_sweep.add_argument("--c2", type=float, default=1.0)
    p_sweep.add_argument("--p1", type=float, default=3.0)
    p_sweep.add_argument("--p2", type=float, default=1.5)
    p_sweep.add_argument("--pexp", type=float, default=None)
    p_sweep.add_argument("--method", default="adaptive-rk45")
    p_sweep.add_argument("--dt", type=float, default=1e-3)
    p_sweep.add_argument("--t-max", type=float, default=None)
    p_sweep.add_argument("--lyapunov", default=None)
    _add_override_flags(p_sweep)

    p_verify = sub.add_parser("verify", help="run the property suites")
    p_verify.add_argument("--scope", choices=("all", "problems", "flows", "bounds"), default="all")
    p_verify.add_argument("--seed", type=int, default=0)

    sub.add_parser("list-problems", help="show the problem catalog")

    p_bounds = sub.add_parser("bounds", help="evaluate settling-time bounds")
    p_bounds.add_argument("--c1", type=float, default=1.0)
    p_bounds.add_argument("--c2", type=float, default=1.0)
    p_bounds.add_argument("--p1", type=float, default=3.0)
    p_bounds.add_argument("--p2", type=float, default=1.5)
    p_bounds.add_argument("--k", type=float, default=None, help="strong-convexity certificate")
    p_bounds.add_argument("--mu", type=float, default=None, help="gradient-dominance certificate")
    p_bounds.add_argument("--grad0", type=float, default=None, help="starting gradient norm")
    p_bounds.add_argument("--gap0", type=float, default=None, help="starting optimality gap")
    p_bounds.add_argument("--pexp", type=float, default=None, help="rescaling order of the single-term flow")
    return parser


def _add_override_flags(p: _Parser) -> None:
    p.add_argument("--output-dir", type=Path, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--slack", type=float, default=None)


def _apply_overrides(spec: harness.ExperimentSpec, args) -> harness.ExperimentSpec:
    import dataclasses
    updates = {}
    if args.output_dir is not None:
        updates["output_dir"] = args.output_dir
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.slack is not None:
        updates["slack"] = args.slack
    return dataclasses.replace(spec, **updates) if updates else spec


def _print_report(spec_name: str, report: harness.ExperimentReport, tags) -> None:
    head = f"{'idx':>4}  {'x0_norm':>12}  {'settle_time':>12}  {'stop_reason':<12}"
    for tag in tags:
        head += f"  {tag + '<=':>14}"
    head += f"  {'dominance':<9}  {'lyapunov':<8}"
    print(f"experiment {spec_name}")
    print(head)
    for r in report.runs:
        settle = "-" if r["settle_time"] is None else f"{r['settle_time']:.6e}"
        line = f"{r['index']:>4}  {r['x0_norm']:>12.6e}  {settle:>12}  {r['stop_reason']:<12}"
        for tag in tags:
            limit = r["dominance"].get(tag, {}).get("limit")
            line += f"  {limit:>14.6e}" if limit is not None else f"  {'-':>14}"
        dom = all(v["pass"] for v in r["dominance"].values()) if r["dominance"] else True
        lyp = all(c["pass"] for c in r["lyapunov"]) if r["lyapunov"] else True
        line += f"  {'pass' if dom else 'FAIL':<9}  {'pass' if lyp else 'FAIL':<8}"
        print(line)
    agg = report.aggregate
    uni = {None: "n/a", True: "pass", False: "FAIL"}[agg["uniformity_pass"]]
    max_settle = "-" if agg["max_settle_time"] is None else f"{agg['max_settle_time']:.6e}"
    bound = "-" if agg["fixed_bound"] is None else f"{agg['fixed_bound']:.6e}"
    print(f"aggregate: converged {agg['n_converged']}/{agg['n_runs']}  max_settle {max_settle}"
          f"  fixed_bound {bound}  uniformity {uni}")
    print(f"RESULT: {'PASS' if report.passed else 'FAIL'}")


def cmd_run(args) -> int:
    if not args.config.exists():
        raise CliError(f"config file not found: {args.config}")
    spec = harness.load_spec(args.config)
    spec = _apply_overrides(spec, args)
    report = harness.run_experiment(spec)
    _print_report(spec.name, report, spec.bounds_to_check)
    return 0 if report.passed else 2


def cmd_sweep(args) -> int:
    problem_args = yaml.safe_load(args.problem_args) if args.problem_args else {}
    if problem_args is None:
        problem_args = {}
    flow_args = {}
    if args.flow not in ("nominal", "p-rescaled"):
        flow_args = {"c1": args.c1, "c2": args.c2, "p1": args.p1, "p2": args.p2}
    if args.pexp is not None:
        flow_args["pexp"] = args.pexp
    integ = {"method": args.method, "dt": args.dt}
    if args.t_max is not None:
        integ["t_max"] = args.t_max
    raw = {
        "name": args.name,
        "problem": {"name": args.problem, **problem_args},
        "flow": {"label": args.flow, **flow_args},
        "integrator": integ,
        "initial_conditions": {"norms": [float(s) for s in args.norms.split(",") if s]},
        "bounds": [s for s in args.bounds.split(",") if s],
        "lyapunov": args.lyapunov,
    }
    spec = harness.load_spec(raw)
    spec = _apply_overrides(spec, args)
    report = harness.run_experiment(spec)
    _print_report(spec.name, report, spec.bounds_to_check)
    return 0 if report.passed else 2


def cmd_verify(args) -> int:
    results = verify.run_scope(args.scope, seed=args.seed)
    all_ok = True
    for res in results:
        status = "pass" if res.passed else "FAIL"
        print(f"suite {res.name:<9} {res.n_checks:>5} checks  {len(res.failures):>3} failures  {status}")
        for msg in sorted(set(res.failures)):
            print(f"  FAIL: {msg}")
        all_ok = all_ok and res.passed
    return 0 if all_ok else 2


def cmd_list_problems(args) -> int:
    print(f"{'name':<28} {'kind':<12} {'dim':>6}  certificates")
    for name in harness.problem_names():
        prob = harness.build_problem(name)
        if isinstance(prob, pb.ObjectiveProblem):
            kind, dim = "objective", str(prob.dim)
            certs = f"k={prob.strong_convexity_k:g} mu={prob.pl_constant_mu:g}"
        elif isinstance(prob, pb.ConstrainedProblem):
            kind, dim = "constrained", f"{prob.objective.dim}x{prob.n_constraints}"
            certs = (f"k={prob.objective.strong_convexity_k:g} "
                     f"mu_dual={prob.dual_strong_convexity:g}")
        else:
            kind, dim = "saddle", f"{prob.n}+{prob.m}"
            certs = f"k1={prob.k1:g} k2={prob.k2:g}"
            if prob.invertibility_only:
                certs += " (invertibility premises only)"
        print(f"{name:<28} {kind:<12} {dim:>6}  {certs}")
    return 0


def cmd_bounds(args) -> int:
    fp = flows.FlowParams(c1=args.c1, c2=args.c2, p1=args.p1, p2=args.p2)
    rows = [("TNM", analysis.bound_TNM(fp).value, "problem-independent")]
    tsp = analysis.bound_TSP(fp)
    rows.append(("TSP", tsp.value,
                 f"printed {tsp.inputs['printed']:.6g}, pattern {tsp.inputs['newton_pattern']:.6g}, larger taken"))
    if args.k is not None:
        rows.append(("T3-strict", analysis.bound_T3(fp, "strict", args.k).value, f"k={args.k:g}"))
    if args.mu is not None:
        rows.append(("T3-pl", analysis.bound_T3(fp, "pl", args.mu).value, f"mu={args.mu:g}"))
    if args.k is not None and args.grad0 is not None:
        rows.append(("T1", analysis.bound_T1(args.k, args.grad0).value,
                     f"k={args.k:g}, grad0={args.grad0:g}"))
        if args.pexp is not None:
            rows.append(("Tp-finite", analysis.bound_Tp_finite("strict", args.pexp, args.k, args.grad0).value,
                         f"strict, pexp={args.pexp:g}"))
    if args.mu is not None and args.gap0 is not None:
        printed = analysis.bound_T2(args.mu, args.gap0, as_printed=True).value
        rederived = analysis.bound_T2(args.mu, args.gap0, as_printed=False).value
        rows.append(("T2", max(printed, rederived),
                     f"printed {printed:.6g}, re-derived {rederived:.6g}, larger taken"))
        if args.pexp is not None:
            rows.append(("Tp-finite", analysis.bound_Tp_finite("pl", args.pexp, args.mu, args.gap0).value,
                         f"pl, pexp={args.pexp:g}"))
    print(f"{'tag':<10} {'value':>14}  notes")
    for tag, value, notes in rows:
        print(f"{tag:<10} {value:>14.6e}  {notes}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "run":
            return cmd_run(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        if args.command == "verify":
            return cmd_verify(args)
        if args.command == "list-problems":
            return cmd_list_problems(args)
        return cmd_bounds(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (harness.ConfigError, ValueError, OSError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
