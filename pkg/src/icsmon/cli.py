"""Command-line front end.

Exit codes: 0 clean, 2 violations found, 3 infeasible, 4 input error.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from typing import Sequence, TextIO

from . import formulation, offline, online, simulator, topogen, verify

EXIT_OK = 0
EXIT_VIOLATIONS = 2
EXIT_INFEASIBLE = 3
EXIT_INPUT = 4


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _flow_table(text: str) -> dict[int, int]:
    out = {}
    for item in text.split(","):
        if not item.strip():
            continue
        v, sep, n = item.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"expected v=n, got {item!r}")
        try:
            out[int(v)] = int(n)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected integers in {item!r}") from None
    return out


def _load_instance(path: str) -> topogen.Instance:
    try:
        return topogen.Instance.load(path)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise InputError(f"cannot read instance {path}: {exc}") from exc


def _load_plan(path: str) -> offline.OfflinePlan:
    try:
        return offline.OfflinePlan.load(path)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise InputError(f"cannot read plan {path}: {exc}") from exc


def _bps(x: Fraction) -> int:
    return int(x)


# -- subcommands --------------------------------------------------------------


def cmd_gen(args, out: TextIO) -> int:
    if args.backbone == "tiny":
        inst = topogen.reserve_standard_fraction(topogen.tiny_instance(args.seed), args.reserve_fraction)
    else:
        try:
            backbone = topogen.load_backbone(args.backbone)
        except (OSError, ValueError, KeyError) as exc:
            raise InputError(f"cannot read backbone {args.backbone}: {exc}") from exc
        alpha = args.alpha
        if args.q_target is not None:
            alpha = topogen.find_alpha(backbone, args.q_target)
            if alpha is None:
                alpha, q = topogen.nearest_alpha(backbone, args.q_target)
                print(
                    f"warning: no alpha on the grid gives q={args.q_target}; using nearest q={q} (alpha={alpha:.2f})",
                    file=sys.stderr,
                )
        inst = topogen.generate_instance(backbone, alpha, args.seed, args.reserve_fraction)
    inst.save(args.out)
    c = inst.counts()
    alpha_txt = "-" if inst.alpha is None else f"{inst.alpha:.2f}"
    print(f"vertices={c['vertices']} links={c['links']} streams={c['streams']} q={c['q']} alpha={alpha_txt}", file=out)
    return EXIT_OK


def cmd_plan(args, out: TextIO) -> int:
    inst = _load_instance(args.instance)
    ids_set = args.multi_ids
    if ids_set is not None and args.ids_capacity is not None:
        raise InputError("--ids-capacity applies to single-IDS mode only")

    if args.mode == "export-lp":
        try:
            m = formulation.build_multi_ids(inst, ids_set) if ids_set else formulation.build_base(inst)
            if args.ids_capacity is not None:
                m = formulation.add_ids_capacity(m, args.ids_capacity, args.ids_capacity_count)
            if args.flow_table:
                m = formulation.add_flow_table_limits(m, args.flow_table)
        except ValueError as exc:
            raise InputError(str(exc)) from exc
        with open(args.out, "w") as fh:
            formulation.export_lp(m, fh)
        print(formulation.summary_json(m), file=out)
        return EXIT_OK

    try:
        plan = offline.solve_exact(
            inst,
            limit=args.option_limit,
            ids_set=ids_set,
            ids_capacity=args.ids_capacity,
            ids_capacity_count=args.ids_capacity_count,
            flow_table=args.flow_table,
            jobs=args.jobs,
        )
    except offline.SizeLimitError as exc:
        raise InputError(str(exc)) from exc
    except offline.InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    plan.save(args.out)
    summary = {
        "status": plan.status,
        "objective": f"{plan.objective.numerator}/{plan.objective.denominator}",
        "objective_float": float(plan.objective),
        "streams": len(plan.routes),
        "observed": plan.observed_count,
    }
    print(json.dumps(summary, indent=2), file=out)
    return EXIT_OK


def cmd_verify(args, out: TextIO) -> int:
    inst = _load_instance(args.instance)
    plan = _load_plan(args.plan)
    report = verify.check_plan(
        inst,
        plan,
        ids_capacity=args.ids_capacity,
        ids_capacity_count=args.ids_capacity_count,
        flow_table=args.flow_table,
    )
    print(verify.report_json(report), file=out)
    return EXIT_VIOLATIONS if report else EXIT_OK


def cmd_simulate(args, out: TextIO) -> int:
    inst = _load_instance(args.instance)
    plan = _load_plan(args.plan) if args.plan else None
    if args.stdin:
        return _line_protocol(inst, plan, args.tau, sys.stdin, out)
    if args.out is None:
        raise InputError("--out is required unless --stdin is given")
    cfg = simulator.WorkloadConfig(
        operators=args.operators if args.operators is not None else inst.q,
        mean_interarrival=args.mean_interarrival,
        mean_duration=args.mean_duration,
        horizon=args.horizon,
        seed=args.seed,
    )
    trace = simulator.generate_events(inst, cfg)
    if args.trace_out:
        simulator.write_trace(trace, args.trace_out)
    stats = simulator.run(inst, plan, trace, tau=args.tau)
    simulator.write_stats(stats, args.out)
    summary = {
        "connections": len(stats.connections),
        "admitted": stats.admitted,
        "rejected": stats.rejections,
        "max_concurrent": stats.max_concurrent,
        "violations": len(stats.violations),
    }
    print(json.dumps(summary, indent=2), file=out)
    return EXIT_VIOLATIONS if stats.violations else EXIT_OK


def _line_protocol(inst, plan, tau: float, inp: TextIO, out: TextIO) -> int:
    """``ADMIT s t [time]``, ``REMOVE id`` and ``DUMP``; one JSON reply per line."""
    state = online.OnlineState(inst, tau=tau, plan=plan)
    for line in inp:
        words = line.split()
        if not words or words[0].startswith("#"):
            continue
        cmd = words[0].upper()
        try:
            if cmd == "ADMIT" and len(words) in (3, 4):
                now = float(words[3]) if len(words) == 4 else 0.0
                adm = state.admit(int(words[1]), int(words[2]), now)
                reply = {
                    "ok": True,
                    "stream": adm.stream.to_dict(),
                    "assignment": {str(k): _bps(v) for k, v in adm.assignment.items()},
                }
            elif cmd == "REMOVE" and len(words) == 2:
                assignment = state.remove(int(words[1]))
                reply = {"ok": True, "assignment": {str(k): _bps(v) for k, v in assignment.items()}}
            elif cmd == "DUMP" and len(words) == 1:
                reply = {"ok": True, "state": state.to_dict()}
            else:
                reply = {"ok": False, "error": f"bad command: {line.strip()}"}
        except online.AdmissionRejected as exc:
            reply = {"ok": False, "rejected": True, "error": str(exc)}
        except (ValueError, KeyError) as exc:
            reply = {"ok": False, "error": str(exc).strip("'\"")}
        print(json.dumps(reply, sort_keys=True), file=out, flush=True)
    return EXIT_VIOLATIONS if verify.check_online_state(state) else EXIT_OK


def cmd_report(args, out: TextIO) -> int:
    try:
        bws = simulator.read_stats_min_bws(args.stats)
    except (OSError, KeyError, ValueError) as exc:
        raise InputError(f"cannot read stats {args.stats}: {exc}") from exc
    try:
        rows = simulator.density_report(bws, args.per_decade)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    if args.density_out:
        simulator.write_density(rows, args.density_out)
    for r in rows:
        print(f"{r.low:>14d} {r.high:>14d} {r.fraction:.6f}", file=out)
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="icsmon", description="Routing and monitoring planner for SDN-based ICS networks.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="build an evaluation instance from a backbone")
    g.add_argument("backbone", help="bundled name (cesnet, attmpls, agis, uninet), 'tiny', or a GraphML/JSON file")
    a = g.add_mutually_exclusive_group()
    a.add_argument("--alpha", type=float, default=0.7, help="power-law exponent for substations per router (default 0.7)")
    a.add_argument("--q-target", type=int, help="search the alpha grid for this substation count")
    g.add_argument("--seed", type=int, default=0, help="seed (selects the instance for 'tiny')")
    g.add_argument("--reserve-fraction", type=float, default=0.05, help="share of each link reserved for standard traffic")
    g.add_argument("--out", required=True, help="instance JSON to write")
    g.set_defaults(func=cmd_gen)

    def constraint_flags(sp):
        sp.add_argument("--ids-capacity", type=int, help="cap on replica bits/s entering the IDS")
        sp.add_argument("--ids-capacity-count", action="store_true", help="make --ids-capacity count replicas instead")
        sp.add_argument("--flow-table", type=_flow_table, default={}, help="per-switch rule limits, e.g. 3=10,5=8")

    pl = sub.add_parser("plan", help="solve exactly or export the ILP")
    pl.add_argument("instance", help="instance JSON")
    pl.add_argument("--mode", choices=("exact", "export-lp"), default="exact")
    pl.add_argument("--multi-ids", type=_int_list, help="comma-separated IDS device ids")
    constraint_flags(pl)
    pl.add_argument("--option-limit", type=int, default=offline.DEFAULT_OPTION_LIMIT, help="simple paths kept per stream")
    pl.add_argument("--jobs", type=int, default=1, help="worker processes for the exact search")
    pl.add_argument("--out", required=True, help="plan JSON (exact) or LP file (export-lp)")
    pl.set_defaults(func=cmd_plan)

    v = sub.add_parser("verify", help="check a plan against an instance")
    v.add_argument("instance")
    v.add_argument("plan")
    constraint_flags(v)
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("simulate", help="replay an operator workload through the online solver")
    s.add_argument("instance")
    s.add_argument("plan", nargs="?", help="offline plan JSON (optional)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--horizon", type=float, default=600.0, help="seconds of arrivals (default 600)")
    s.add_argument("--operators", type=int, help="operator count (default: the instance's q)")
    s.add_argument("--mean-interarrival", type=float, default=300.0, help="seconds (default 300)")
    s.add_argument("--mean-duration", type=float, default=900.0, help="seconds (default 900)")
    s.add_argument("--tau", type=float, default=online.DEFAULT_TAU, help="admission delay in seconds (default 0.01)")
    s.add_argument("--out", help="stats CSV to write")
    s.add_argument("--trace-out", help="also write the event trace CSV")
    s.add_argument("--stdin", action="store_true", help="read ADMIT s t / REMOVE id commands from standard input")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("report", help="bandwidth density of a simulation run")
    r.add_argument("stats", help="stats CSV from simulate")
    r.add_argument("--density-out", help="density CSV to write")
    r.add_argument("--per-decade", type=int, default=10, help="log buckets per decade (default 10)")
    r.set_defaults(func=cmd_report)
    return p


def main(argv: Sequence[str] | None = None, out: TextIO | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out or sys.stdout)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
