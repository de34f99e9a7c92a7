"""Benchmark runner: topology x flow count x algorithm x seed."""
from __future__ import annotations

import csv
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

from .adjust import ALGORITHMS, orchestrate
from .config import ShaperConfig
from .model import PriorityClass
from .topology import DEFAULT_MIX, KINDS, PERIODS_NS, gen_flows, gen_topology

ROW_FIELDS = ["topology", "n_flows", "algorithm", "seed", "success_rate", "nominal_utilization",
              "nominal_utilization_per_link", "n_tt", "n_avb_a", "n_avb_b", "n_be", "error"]
TIMING_FIELDS = ["topology", "n_flows", "algorithm", "seed", "wall_time_ms"]


@dataclass
class BenchConfig:
    topologies: list = field(default_factory=lambda: list(KINDS))
    ladder_k: int = 4
    flow_counts: list = field(default_factory=lambda: [50, 100, 200, 300])
    algorithms: list = field(default_factory=lambda: list(ALGORITHMS))
    seeds: list = field(default_factory=lambda: list(range(5)))
    mix: tuple = DEFAULT_MIX
    periods_ns: tuple = PERIODS_NS
    ddl_range: tuple = (0.5, 1.0)
    max_per_pair: int = 8
    workers: int = 1
    shaper: ShaperConfig = field(default_factory=ShaperConfig)

    @classmethod
    def from_dict(cls, d):
        d = dict(d.get("bench", d))
        shaper = ShaperConfig.from_dict(d.pop("shaper", {}))
        if "n_seeds" in d:
            d["seeds"] = list(range(d.pop("n_seeds")))
        for k in ("mix", "periods_ns", "ddl_range"):
            if k in d:
                d[k] = tuple(d[k])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown bench keys: {sorted(unknown)}")
        for a in d.get("algorithms", []):
            if a not in ALGORITHMS:
                raise ValueError(f"unknown algorithm {a!r}")
        return cls(shaper=shaper, **d)

    @classmethod
    def load(cls, path):
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        with open(path, "rb") as fh:
            return cls.from_dict(tomllib.load(fh))


def nominal_utilization(solution, net=None):
    """Sum over scheduled flows and their links of C_l / period, as an exact fraction."""
    total = Fraction(0)
    for f in solution.flows:
        if solution.scheduled.get(f.id):
            for l in f.route:
                total += Fraction(solution.config.wire(f.size, l), f.period)
    return total


def _instance(task):
    kind, k, n, seed, cfg = task
    net = gen_topology(kind, k=k)
    rows, timing = [], []
    try:
        flows = gen_flows(net, n, cfg.mix, seed, cfg.periods_ns, cfg.ddl_range, max_per_pair=cfg.max_per_pair)
    except ValueError as e:
        for algo in cfg.algorithms:
            rows.append(_row(kind, n, algo, seed, error=str(e)))
            timing.append([kind, n, algo, seed, ""])
        return rows, timing
    for algo in cfg.algorithms:
        t0 = time.perf_counter()
        try:
            sol = orchestrate(net, flows, cfg.shaper, algo)
        except Exception as e:  # keep the sweep going; the row records the failure
            rows.append(_row(kind, n, algo, seed, error=f"{type(e).__name__}: {e}"))
            timing.append([kind, n, algo, seed, ""])
            continue
        ms = (time.perf_counter() - t0) * 1000
        u = nominal_utilization(sol, net)
        counts = sol.class_counts()
        rows.append(_row(kind, n, algo, seed, sol.success_rate, u, u / len(net.links),
                         counts[PriorityClass.TT], counts[PriorityClass.AVB_A],
                         counts[PriorityClass.AVB_B], counts[PriorityClass.BE]))
        timing.append([kind, n, algo, seed, f"{ms:.1f}"])
    return rows, timing


def _row(kind, n, algo, seed, rate=None, u=None, ul=None, tt="", a="", b="", be="", error=""):
    fmt = (lambda x: "" if x is None else f"{float(x):.6f}")
    return [kind, n, algo, seed, fmt(rate), fmt(u), fmt(ul), tt, a, b, be, error]


def run_bench(cfg: BenchConfig, out_dir, progress=None):
    """Run the sweep, write ``results.csv`` and ``timing.csv``; return the result rows.

    Results are independent of ``workers``; wall times live in their own
    file so ``results.csv`` is reproducible byte for byte.
    """
    os.makedirs(out_dir, exist_ok=True)
    tasks = [(kind, cfg.ladder_k, n, seed, cfg)
             for kind in cfg.topologies for n in cfg.flow_counts for seed in cfg.seeds]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            outs = list(ex.map(_instance, tasks))
    else:
        outs = []
        for t in tasks:
            outs.append(_instance(t))
            if progress:
                progress(t)
    rows = [r for rs, _ in outs for r in rs]
    timing = [r for _, ts in outs for r in ts]
    _write(os.path.join(out_dir, "results.csv"), ROW_FIELDS, rows)
    _write(os.path.join(out_dir, "timing.csv"), TIMING_FIELDS, timing)
    # string values, exactly as read_rows() sees the file
    return [dict(zip(ROW_FIELDS, map(str, r))) for r in rows]


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def summarize(rows):
    """Mean success rate and utilisation per (topology, n_flows, algorithm)."""
    acc = {}
    for r in rows:
        if r.get("error") or r["success_rate"] in ("", None):
            continue
        key = (r["topology"], int(r["n_flows"]), r["algorithm"])
        s = acc.setdefault(key, [0, 0.0, 0.0])
        s[0] += 1
        s[1] += float(r["success_rate"])
        s[2] += float(r["nominal_utilization"])
    out = []
    for (kind, n, algo), (cnt, sr, u) in sorted(acc.items()):
        out.append({"topology": kind, "n_flows": n, "algorithm": algo, "runs": cnt,
                    "mean_success_rate": sr / cnt, "mean_nominal_utilization": u / cnt})
    return out


def summary_table(summary):
    """Plain-text table including each algorithm's gap to ``proposed``."""
    base = {(s["topology"], s["n_flows"]): s["mean_success_rate"]
            for s in summary if s["algorithm"] == "proposed"}
    lines = [f"{'topology':<8} {'flows':>5} {'algorithm':<9} {'runs':>4} {'success':>8} {'util':>8} {'gap_pp':>7}"]
    for s in summary:
        p = base.get((s["topology"], s["n_flows"]))
        gap = "" if p is None else f"{100 * (p - s['mean_success_rate']):.2f}"
        lines.append(f"{s['topology']:<8} {s['n_flows']:>5} {s['algorithm']:<9} {s['runs']:>4} "
                     f"{s['mean_success_rate']:>8.4f} {s['mean_nominal_utilization']:>8.3f} {gap:>7}")
    return "\n".join(lines)


def write_summary(summary, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["topology", "n_flows", "algorithm", "runs", "mean_success_rate", "mean_nominal_utilization"])
        for s in summary:
            w.writerow([s["topology"], s["n_flows"], s["algorithm"], s["runs"],
                        f"{s['mean_success_rate']:.6f}", f"{s['mean_nominal_utilization']:.6f}"])
