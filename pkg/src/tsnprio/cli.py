"""Command-line interface: ``tsnprio <command> ...``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

from . import io as tio
from .adjust import ALGORITHMS, orchestrate, solution_from_dict, solution_to_dict, verify_solution
from .bench import BenchConfig, nominal_utilization, read_rows, run_bench, summarize, summary_table, write_summary
from .config import ShaperConfig
from .groups import FgConflictGraph, group_flows
from .model import ConfigurationError, PriorityClass, RoutingError, ValidationError
from .topology import DEFAULT_MIX, KINDS, gen_flows, gen_topology

EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3

log = logging.getLogger("tsnprio")


def _write_json(doc, path):
    if path in (None, "-"):
        json.dump(doc, sys.stdout, indent=1, sort_keys=True)
        sys.stdout.write("\n")
    else:
        tio.dump_json(doc, path)


def _load_net(path):
    return tio.network_from_dict(tio.load_json(path))


def _shaper(args):
    kw = {}
    if getattr(args, "no_preemption", False):
        kw["preemption"] = False
    if getattr(args, "idle_a", None) is not None:
        kw["idle_a"] = args.idle_a
    if getattr(args, "idle_b", None) is not None:
        kw["idle_b"] = args.idle_b
    return ShaperConfig(**kw)


def cmd_gen_topo(args):
    net = gen_topology(args.kind, k=args.k, es_per_sw=args.es_per_sw, rate=args.rate)
    _write_json(tio.network_to_dict(net), args.output)


def cmd_gen_flows(args):
    net = _load_net(args.net)
    mix = tuple(float(x) for x in args.mix.split(",")) if args.mix else DEFAULT_MIX
    flows = gen_flows(net, args.n, mix, args.seed, max_per_pair=args.max_per_pair)
    _write_json(tio.flows_to_dict(flows), args.output)


def cmd_schedule(args):
    net = _load_net(args.net)
    flows = tio.flows_from_dict(tio.load_json(args.flows), net)
    sol = orchestrate(net, flows, _shaper(args), args.algo, workers=args.workers)
    problems = verify_solution(sol)
    if problems:
        for p in problems:
            log.error("checker: %s", p)
        raise RuntimeError("independent checker rejected the solution")
    _write_json(solution_to_dict(sol, net), args.output)
    if args.rta:
        sol.report.to_csv(args.rta)
    if args.dot:
        non_be = [f for f in flows if f.static_prio != PriorityClass.BE]
        with open(args.dot, "w") as fh:
            fh.write(FgConflictGraph(group_flows(non_be)).to_dot())
    counts = sol.class_counts()
    print(f"algo={sol.algo} flows={len(flows)} scheduled={sol.objective} success_rate={sol.success_rate:.4f} "
          f"tt={counts[PriorityClass.TT]} avb_a={counts[PriorityClass.AVB_A]} "
          f"avb_b={counts[PriorityClass.AVB_B]} be={counts[PriorityClass.BE]} "
          f"nominal_utilization={float(nominal_utilization(sol)):.6f}",
          file=sys.stderr if args.output in (None, "-") else sys.stdout)


def cmd_simulate(args):
    from .sim import replay_check, simulate

    net, sol = solution_from_dict(tio.load_json(args.solution))
    res = simulate(net, sol, horizon=args.horizon, release=args.release, seed=args.seed,
                   be_load=args.be_load, trace=args.trace)
    unsound = res.soundness_violations(sol.report)
    replay = replay_check(net, sol)
    out = open(args.output, "w", newline="") if args.output not in (None, "-") else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["flow", "class", "frames", "max_delay_ns", "mean_delay_ns", "bound_ns", "ddl_ns", "misses"])
        by_id = {f.id: f for f in sol.flows}
        for fid, st in sorted(res.stats.items()):
            e = sol.report.get(fid)
            w.writerow([fid, sol.assigned[fid].label, st.count, st.max_delay, f"{st.mean_delay:.1f}",
                        "" if e is None or e.rt is None else e.rt, by_id[fid].ddl, st.misses])
    finally:
        if out is not sys.stdout:
            out.close()
    print(f"released={res.released} delivered={res.delivered} in_flight={res.in_flight} "
          f"bound_violations={len(unsound)} replay_violations={len(replay)}", file=sys.stderr)
    for fid, obs, rt in unsound:
        print(f"flow {fid}: observed {obs} ns > bound {rt} ns", file=sys.stderr)
    for v in replay:
        print(str(v), file=sys.stderr)
    return 1 if unsound or replay else 0


def cmd_bench(args):
    cfg = BenchConfig.load(args.config) if args.config else BenchConfig()
    if args.workers:
        cfg.workers = args.workers
    rows = run_bench(cfg, args.output, progress=lambda t: log.info("done %s n=%d seed=%d", t[0], t[2], t[3]))
    if args.no_timing:
        os.remove(os.path.join(args.output, "timing.csv"))
    summary = summarize(rows)
    write_summary(summary, os.path.join(args.output, "summary.csv"))
    print(summary_table(summary))


def cmd_report(args):
    rows = read_rows(os.path.join(args.input, "results.csv"))
    tpath = os.path.join(args.input, "timing.csv")
    timing = read_rows(tpath) if os.path.exists(tpath) else []
    out_dir = args.output or args.input
    os.makedirs(out_dir, exist_ok=True)
    summary = summarize(rows)
    write_summary(summary, os.path.join(out_dir, "summary.csv"))
    print(summary_table(summary))
    if args.plots:
        from .plotting import plot_all

        for p in plot_all(rows, timing, out_dir):
            print(f"wrote {p}")


def build_parser():
    p = argparse.ArgumentParser(prog="tsnprio", description="Priority adjustment for TSN flows with TT/AVB/BE classes.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("gen-topo", help="generate a benchmark topology")
    s.add_argument("--kind", choices=KINDS, required=True)
    s.add_argument("--k", type=int, default=4, help="ladder length")
    s.add_argument("--es-per-sw", type=int, default=None)
    s.add_argument("--rate", type=int, default=1_000_000_000, help="link rate in bit/s")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_gen_topo)

    s = sub.add_parser("gen-flows", help="generate a random flow set")
    s.add_argument("--net", required=True)
    s.add_argument("-n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--mix", help="TT,A,B,BE weights, e.g. 0.1,0.5,0.25,0.15")
    s.add_argument("--max-per-pair", type=int, default=8)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_gen_flows)

    def shaper_opts(s):
        s.add_argument("--no-preemption", action="store_true")
        s.add_argument("--idle-a", type=float)
        s.add_argument("--idle-b", type=float)

    s = sub.add_parser("schedule", help="assign priorities and synthesise TT windows")
    s.add_argument("--algo", choices=ALGORITHMS, default="proposed")
    s.add_argument("--net", required=True)
    s.add_argument("--flows", required=True)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--rta", help="write per-flow bounds as CSV")
    s.add_argument("--dot", help="write the FG-conflict graph as Graphviz DOT")
    s.add_argument("-o", "--output")
    shaper_opts(s)
    s.set_defaults(func=cmd_schedule)

    s = sub.add_parser("simulate", help="simulate a solution and compare with its bounds")
    s.add_argument("--solution", required=True)
    s.add_argument("--horizon", type=int, default=10, help="hyperperiods")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--release", choices=("sync", "random"), default="sync")
    s.add_argument("--be-load", type=float, default=0.0)
    s.add_argument("--trace", help="event trace CSV")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("bench", help="run a benchmark sweep")
    s.add_argument("--config", help="TOML file")
    s.add_argument("--workers", type=int)
    s.add_argument("--no-timing", action="store_true", help="do not keep timing.csv")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("report", help="summarise benchmark results")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", dest="output")
    s.add_argument("--plots", action="store_true")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args) or 0
    except RoutingError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ValidationError as e:
        print("error: invalid input", file=sys.stderr)
        for p in e.problems:
            print(f"  {p}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ConfigurationError, ValueError, KeyError, json.JSONDecodeError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
