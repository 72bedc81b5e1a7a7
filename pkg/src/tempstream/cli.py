"""Command-line entry point: plan, gantt, validate, fit and report."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import analyzer
from .model import GroundingError
from .pddl import StreamSpecSet, parse_domain, parse_problem, parse_streams
from .planner import MODES, Plan, PlanningError, ground_for_plan, solve_temporal, validate_plan
from .report import ReportError, load_logs, render_report
from .schedule import FORMATS, ScheduleError, extract_schedule, render_gantt
from .search import SearchConfig, SearchLimitExceeded
from .sexpr import ParseError, SourceText
from .streams import StreamError, StreamRegistry
from .temporal import DurativeError, default_config, load_config

log = logging.getLogger("tempstream")

# errors that mean "the input does not admit an answer" rather than "the command line is wrong"
DOMAIN_ERRORS = (ParseError, GroundingError, DurativeError, PlanningError, StreamError, SearchLimitExceeded,
                 ScheduleError, ReportError, analyzer.AnalyzerError, json.JSONDecodeError, KeyError, ValueError)


# the part of the posterior kept inside fit.json; marginals and bands go to posterior.json
POSTERIOR_BRIEF = ("N", "seed", "prior_kind", "effective_sample_size", "joint_mode", "summary")


class UsageError(Exception):
    pass


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {path}")
    return p


def _write(path: str, data: bytes | str) -> None:
    if isinstance(data, str):
        data = data.encode("utf-8")
    Path(path).write_bytes(data)


def _load_task(args):
    dom = parse_domain(SourceText.from_path(_existing(args.domain)))
    prob = parse_problem(SourceText.from_path(_existing(args.problem)), dom)
    specs = StreamSpecSet(())
    if getattr(args, "streams", None):
        specs = parse_streams(SourceText.from_path(_existing(args.streams)), dom)
    return dom, prob, specs


def cmd_plan(args) -> int:
    dom, prob, specs = _load_task(args)
    if args.config:
        cfg = load_config(_existing(args.config), args.t_unit, args.t_max)
    else:
        cfg = default_config(dom, args.t_unit or 60, args.t_max)
    scfg = SearchConfig(weight=args.weight, heuristic=args.heuristic)
    registry = StreamRegistry(seed=args.seed, config=cfg)
    plan = solve_temporal(dom, prob, specs, cfg, scfg, mode=args.mode, registry=registry)
    if plan is None:
        if args.mode == "parallel":
            print(f"error: no plan within t_max ({cfg.t_max} s)", file=sys.stderr)
        else:
            print("error: no plan exists", file=sys.stderr)
        return 1
    print(f"{args.mode} plan: {len(plan.actions)} actions, makespan {plan.makespan} s, total cost {plan.cost}")
    for step in plan.actions:
        print(f"  {step.t_start:>6} +{step.duration:<4} ({' '.join((step.name,) + step.args)})")
    if args.output:
        _write(args.output, plan.dumps())
    return 0


def cmd_gantt(args) -> int:
    plan = Plan.loads(_existing(args.plan).read_text(encoding="utf-8"))
    sched = extract_schedule(plan)
    out = render_gantt(sched, args.format)
    if args.output:
        _write(args.output, out)
        print(f"Gantt chart ({args.format}): {len(sched.agents)} agents, makespan {sched.makespan} s")
    elif args.format == "ascii":
        sys.stdout.write(out.decode("utf-8"))
    else:
        raise UsageError(f"--format {args.format} writes a machine artifact; give it a path with -o")
    overlaps = sched.overlapping_pairs()
    if overlaps:
        a, b = overlaps[0]
        print(f"error: agent {a.agent} double-booked by {a.action} and {b.action}", file=sys.stderr)
        return 1
    return 0


def cmd_validate(args) -> int:
    dom, prob, specs = _load_task(args)
    plan = Plan.loads(_existing(args.plan).read_text(encoding="utf-8"))
    report = validate_plan(plan, ground_for_plan(dom, prob, plan, specs))
    print(report)
    if report.valid:
        overlaps = extract_schedule(plan).overlapping_pairs()
        if overlaps:
            a, b = overlaps[0]
            print(f"schedule invalid: agent {a.agent} double-booked by {a.action} and {b.action}")
            return 1
    return 0 if report.valid else 1


def cmd_fit(args) -> int:
    data = analyzer.Dataset.from_csv(_existing(args.data))
    fit = analyzer.fit_mle(data, cfg=analyzer.FitConfig(restarts=args.restarts))
    p = fit.params
    print(f"fit over {fit.n_points} points: pKa1 {p.pKa1:.3f}, pKa2 {p.pKa2:.3f}, k {p.k:.2f} mV, "
          f"E_inf {p.E_inf:.1f} mV, sigma_eV {p.sigma_eV:.2f} mV")
    print(f"region-1 slope {p.region1_slope:.2f} mV/pH, log-likelihood {fit.log_likelihood:.3f}")
    for note in fit.diagnostics:
        print(f"diagnostic: {note}")
    out = fit.to_json()
    out["posterior"] = None
    if args.samples > 0:
        if args.prior == "laplace":
            prior = analyzer.laplace_prior(data, p, n_sd=args.prior_width)
        else:
            prior = analyzer.PriorRanges.default_for(data)
        ws = analyzer.sample_posterior(data, prior, N=args.samples, seed=args.seed)
        post = analyzer.posterior_summary(ws, bins=args.bins)
        post["prior_kind"] = args.prior
        out["posterior"] = {k: post[k] for k in POSTERIOR_BRIEF}
        mode = ws.joint_mode()
        print(f"posterior: {ws.N} samples ({args.prior} prior), effective size {ws.effective_sample_size:.1f}, "
              f"joint-mode pKa1 {mode.pKa1:.3f}")
    if args.output:
        _write(args.output, analyzer.dump_json(out))
        if out["posterior"] is not None:
            _write(str(Path(args.output).with_name("posterior.json")), analyzer.dump_json(post))
    return 0


def cmd_report(args) -> int:
    plan = Plan.loads(_existing(args.plan).read_text(encoding="utf-8"))
    fit_json = json.loads(_existing(args.fit).read_text(encoding="utf-8"))
    fit = analyzer.FitResult.from_json(fit_json)
    logs = load_logs(_existing(args.logs).read_text(encoding="utf-8"))
    clock = args.timestamp or datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    rep = render_report(extract_schedule(plan), fit, logs, clock, title=args.title,
                        posterior=fit_json.get("posterior"),
                        plan_info={"total_cost": plan.cost, "mode": plan.mode}, gantt_ref=args.gantt_ref)
    if args.output:
        _write(args.output, rep.markdown)
        _write(str(Path(args.output).with_suffix(".json")), rep.sidecar_text())
        print(f"report: {len(logs)} runs, makespan {extract_schedule(plan).makespan} s, written to {args.output}")
    else:
        sys.stdout.write(rep.markdown)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tempstream", description="Temporal task planning and Pourbaix fitting.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log planner progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="plan a PDDL problem")
    p.add_argument("domain")
    p.add_argument("problem")
    p.add_argument("--streams", help="stream declarations file")
    p.add_argument("--config", help="TOML file with durations and acting agents")
    p.add_argument("--mode", choices=MODES, default="parallel")
    p.add_argument("--t-unit", type=int, default=None, help="time unit in seconds (default 60)")
    p.add_argument("--t-max", type=int, default=None, help="time horizon in seconds")
    p.add_argument("--weight", type=float, default=2.0)
    p.add_argument("--heuristic", choices=("add", "max", "blind"), default="add")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", help="write plan.json here")
    p.set_defaults(func=cmd_plan)

    g = sub.add_parser("gantt", help="render the schedule of a plan")
    g.add_argument("plan")
    g.add_argument("--format", choices=FORMATS, default="svg")
    g.add_argument("-o", "--output")
    g.set_defaults(func=cmd_gantt)

    v = sub.add_parser("validate", help="replay a plan against a problem")
    v.add_argument("domain")
    v.add_argument("problem")
    v.add_argument("plan")
    v.add_argument("--streams")
    v.set_defaults(func=cmd_validate)

    f = sub.add_parser("fit", help="fit Pourbaix parameters to pH,eV data")
    f.add_argument("data")
    f.add_argument("--samples", type=int, default=100_000, help="posterior samples (0 skips sampling)")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--prior", choices=("laplace", "default"), default="laplace",
                   help="uniform box around the fit (laplace) or the broad default box")
    f.add_argument("--prior-width", type=float, default=3.0, help="laplace box half-width in standard deviations")
    f.add_argument("--bins", type=int, default=20)
    f.add_argument("--restarts", type=int, default=8)
    f.add_argument("-o", "--output", help="write fit.json here (and posterior.json beside it)")
    f.set_defaults(func=cmd_fit)

    r = sub.add_parser("report", help="render the experiment report")
    r.add_argument("plan")
    r.add_argument("fit")
    r.add_argument("logs")
    r.add_argument("-o", "--output", help="write report.md (and report.json beside it)")
    r.add_argument("--timestamp", help="timestamp printed in the report (default: now, UTC)")
    r.add_argument("--title", default="Electrochemistry experiment")
    r.add_argument("--gantt-ref", default="gantt.svg")
    r.set_defaults(func=cmd_report)
    return ap


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DOMAIN_ERRORS as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
