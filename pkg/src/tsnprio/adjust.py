"""Priority adjustment: the proposed parallel/cross flow-group schedulers, the
Static and Upgrade baselines, and the orchestrator that runs them per
independent component.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .config import ShaperConfig
from .groups import (
    FgConflictGraph,
    avb_adjust,
    avb_confliction,
    components,
    group_flows,
    tt_adjust,
    tt_confliction,
)
from .model import PriorityClass, ValidationError, hyperperiod, route_keys, validate_flow
from .rta import A, B, Analyzer, RtaReport, tt_entry
from .tt import TtSchedule, asap_add, asap_schedule, place_raw

logger = logging.getLogger("tsnprio")

TT = PriorityClass.TT
BE = PriorityClass.BE
ALGORITHMS = ("proposed", "static", "upgrade")


def _by_ddl(f):
    return (f.ddl, f.id)


@dataclass
class Fragment:
    """Result of scheduling one component."""

    assigned: dict
    scheduled: dict
    schedule: TtSchedule
    report: RtaReport
    kind: str = ""


@dataclass
class Solution:
    flows: list
    assigned: dict
    scheduled: dict
    schedule: TtSchedule
    report: RtaReport
    algo: str
    config: ShaperConfig = field(default_factory=ShaperConfig)

    @property
    def objective(self):
        return sum(1 for v in self.scheduled.values() if v)

    @property
    def success_rate(self):
        return self.objective / len(self.flows) if self.flows else 0.0

    def rt(self, fid):
        e = self.report.get(fid)
        return None if e is None else e.rt

    def class_counts(self):
        counts = {c: 0 for c in PriorityClass}
        for fid, ok in self.scheduled.items():
            if ok:
                counts[self.assigned[fid]] += 1
        return counts


# shared building blocks

def _static_tt(flows, config, T):
    return asap_schedule([f for f in flows if f.static_prio == TT], config, T)


def _finalize(flows, assigned, schedule, config, be_flows, present=None, kind=""):
    """Verify the AVB population and emit per-flow outcomes.

    ``present`` is the AVB map the algorithm believes schedulable; any flow
    that still misses its deadline is dropped.
    """
    an = Analyzer(flows, schedule, config, be_flows)
    if present is None:
        present = {f.id: assigned[f.id] for f in flows if assigned[f.id] in (A, B)}
    admitted, rep = an.admit(present)
    scheduled = {}
    report = RtaReport()
    for f in flows:
        cls = assigned[f.id]
        if cls == TT:
            scheduled[f.id] = f.id in schedule
            if f.id in schedule:
                report[f.id] = tt_entry(f.id, schedule, f.ddl)
        elif cls == BE:
            scheduled[f.id] = True
        else:
            scheduled[f.id] = f.id in admitted
            if f.id in admitted:
                report[f.id] = rep[f.id]
    return Fragment(assigned, scheduled, schedule, report, kind)


def promotion_order(flows, kind, schedule, T):
    """Order in which AVB flows are offered a TT slot.

    Deadline-ascending for a single flow group; by descending TT-adjust
    precedence when groups cross.
    """
    avb = [f for f in flows if f.static_prio in (A, B)]
    if kind == "parallel":
        return sorted(avb, key=_by_ddl)
    tt_now = [f for f in flows if f.id in schedule]
    prec = {f.id: tt_adjust(f, tt_confliction(f, tt_now, T)) for f in avb}
    return sorted(avb, key=lambda f: (-prec[f.id], f.id))


def _promote(flows, kind, schedule, config, T, assigned):
    for f in promotion_order(flows, kind, schedule, T):
        ok, schedule = asap_add(f, schedule, config)
        if ok:
            assigned[f.id] = TT
    return schedule


# Alg. 1

def estimate_schedulable(ids, cls, analyzer: Analyzer, context=None, trace=None):
    """Largest deadline-ordered suffix whose head meets the set bound.

    Returns the surviving ids; dropped heads are those whose deadline fell
    below the bound of the set they headed. ``trace`` collects
    ``(head, bound, kept)`` tuples.
    """
    flist = sorted(ids, key=lambda i: (analyzer.flows[i].ddl, i))
    while flist:
        head = flist[0]
        e = analyzer.rt_of_set(flist, cls, context)
        kept = e.rt is not None and analyzer.flows[head].ddl >= e.rt
        if trace is not None:
            trace.append((tuple(flist), e.rt, kept))
        if kept:
            break
        flist.pop(0)
    return flist


def _estimate_parallel(an, a_ids, b_ids):
    sa = estimate_schedulable(a_ids, A, an, {i: B for i in b_ids}) if a_ids else []
    sb = estimate_schedulable(b_ids, B, an, {i: A for i in sa}) if b_ids else []
    present = {i: A for i in sa}
    present.update({i: B for i in sb})
    return len(sa) + len(sb), present


# Alg. 2

def schedule_parallel_fg(flows, config, T, be_flows=()):
    """Proposed scheduler for one isolated flow group."""
    flows = sorted(flows, key=lambda f: f.id)
    assigned = {f.id: f.static_prio for f in flows}
    schedule, _ = _static_tt(flows, config, T)
    schedule = _promote(flows, "parallel", schedule, config, T, assigned)
    rest = sorted((f for f in flows if assigned[f.id] in (A, B)), key=_by_ddl)
    an = Analyzer(flows, schedule, config, be_flows)
    a_ids = [f.id for f in rest]
    b_ids = []
    n_best, best_present = _estimate_parallel(an, a_ids, b_ids)
    best = (list(a_ids), [])
    for f in reversed(rest):
        a_ids.remove(f.id)
        b_ids.append(f.id)
        n_cur, present = _estimate_parallel(an, a_ids, b_ids)
        if n_cur >= n_best:
            n_best, best_present, best = n_cur, present, (list(a_ids), list(b_ids))
        else:
            break
    for i in best[0]:
        assigned[i] = A
    for i in best[1]:
        assigned[i] = B
    return _finalize(flows, assigned, schedule, config, be_flows, best_present, "parallel")


def _estimate_cross(an, cur, order):
    """Check flows one by one in ``order``, removing each that misses its deadline."""
    pop = an.population(cur)
    for fid in order:
        if fid in pop.cls and not pop.entry(fid).feasible:
            pop.set(fid, None)
    return dict(pop.cls)


def avb_adjust_order(flows, assigned, schedule):
    """Remaining AVB flow ids by descending AVB-adjust precedence (ties by id).

    Group sizes count scheduled TT members and undecided AVB members.
    """
    rest = [f for f in flows if assigned[f.id] in (A, B)]
    rest_ids = {f.id for f in rest}
    groups = group_flows(flows)
    sizes = [sum(1 for i in g.members if i in schedule or i in rest_ids) for g in groups]
    graph = FgConflictGraph(groups, sizes)
    prec = {f.id: avb_adjust(f, avb_confliction(f.id, graph)) for f in rest}
    return [f.id for f in sorted(rest, key=lambda f: (-prec[f.id], f.id))]


def schedule_cross_fg(flows, config, T, be_flows=()):
    """Proposed scheduler for a set of flow groups connected by shared links."""
    flows = sorted(flows, key=lambda f: f.id)
    assigned = {f.id: f.static_prio for f in flows}
    schedule, placed = _static_tt(flows, config, T)
    schedule = _promote(flows, "crossed", schedule, config, T, assigned)
    desc = avb_adjust_order(flows, assigned, schedule)
    an = Analyzer(flows, schedule, config, be_flows)
    cur = {i: A for i in desc}
    best_present = _estimate_cross(an, cur, desc)
    n_best = len(best_present)
    best = dict(cur)
    for fid in reversed(desc):
        cur[fid] = B
        present = _estimate_cross(an, cur, desc)
        if len(present) >= n_best:
            n_best, best_present, best = len(present), present, dict(cur)
        else:
            cur[fid] = A
    assigned.update(best)
    return _finalize(flows, assigned, schedule, config, be_flows, best_present, "crossed")


# baselines

def schedule_static(flows, config, T, be_flows=()):
    flows = sorted(flows, key=lambda f: f.id)
    assigned = {f.id: f.static_prio for f in flows}
    schedule, _ = _static_tt(flows, config, T)
    return _finalize(flows, assigned, schedule, config, be_flows, kind="static")


def schedule_upgrade(flows, config, T, be_flows=()):
    """Greedy compensation: raise each failing flow one class at a time.

    An upgrade is kept only if the flow then meets its deadline and every
    flow admitted so far still does.
    """
    flows = sorted(flows, key=lambda f: f.id)
    assigned = {f.id: f.static_prio for f in flows}
    schedule, _ = _static_tt(flows, config, T)
    an = Analyzer(flows, schedule, config, be_flows)
    present = {f.id: f.static_prio for f in flows if f.static_prio in (A, B)}
    admitted, _ = an.admit(present)
    failing = sorted((f for f in flows if f.static_prio in (A, B) and f.id not in admitted), key=_by_ddl)
    for f in failing:
        cls = assigned[f.id]
        while cls != TT:
            cls = PriorityClass(cls + 1)
            if cls == A:
                pop = an.population(admitted)
                pop.set(f.id, A)
                if pop.all_feasible():
                    admitted = dict(pop.cls)
                    assigned[f.id] = A
                    break
            else:
                ok, trial = asap_add(f, schedule, config)
                if not ok:
                    break
                an2 = an.with_schedule(trial, route_keys(f.route))
                if an2.population(admitted).all_feasible():
                    schedule, an = trial, an2
                    assigned[f.id] = TT
                    break
    return _finalize(flows, assigned, schedule, config, be_flows, admitted, "upgrade")


# orchestration

def validate(net, flows):
    problems = []
    seen = set()
    for f in flows:
        if f.id in seen:
            problems.append(f"flow {f.id}: duplicate id")
        seen.add(f.id)
        problems.extend(validate_flow(net, f))
        if not f.route:
            problems.append(f"flow {f.id}: no route")
    if problems:
        raise ValidationError(problems)


def split_components(flows):
    """Independent flow sets: flow groups joined by shared links. BE flows are excluded."""
    non_be = [f for f in flows if f.static_prio != BE]
    graph = FgConflictGraph(group_flows(non_be))
    by_id = {f.id: f for f in non_be}
    return [([by_id[i] for i in c.flow_ids()], c.kind) for c in components(graph)]


def schedule_component(task):
    flows, kind, algo, config, T, be_flows = task
    if algo == "proposed":
        fn = schedule_parallel_fg if kind == "parallel" else schedule_cross_fg
    elif algo == "static":
        fn = schedule_static
    elif algo == "upgrade":
        fn = schedule_upgrade
    else:
        raise ValueError(f"unknown algorithm {algo!r}")
    return fn(flows, config, T, be_flows)


def orchestrate(net, flows, config=None, algo="proposed", workers=1):
    """Schedule the whole flow set and report the objective per flow.

    Components are scheduled independently (optionally in worker processes)
    and merged in component order, so the result does not depend on
    ``workers``.
    """
    config = config or ShaperConfig()
    if algo not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algo!r}")
    flows = sorted(flows, key=lambda f: f.id)
    validate(net, flows)
    T = hyperperiod(flows) if flows else 1
    be_flows = [f for f in flows if f.static_prio == BE]
    tasks = [(fl, kind, algo, config, T, be_flows) for fl, kind in split_components(flows)]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            frags = list(ex.map(schedule_component, tasks))
    else:
        frags = [schedule_component(t) for t in tasks]
    assigned = {f.id: f.static_prio for f in be_flows}
    scheduled = {f.id: True for f in be_flows}
    schedule = TtSchedule(T)
    report = RtaReport()
    for fr in frags:
        assigned.update(fr.assigned)
        scheduled.update(fr.scheduled)
        schedule = schedule.merge(fr.schedule)
        report.update(fr.report)
    return Solution(flows, assigned, scheduled, schedule, report, algo, config)


# independent re-check

def verify_solution(sol: Solution, net=None):
    """Recompute every bound from scratch; list violated guarantees."""
    from .tt import check_constraints

    problems = [str(v) for v in check_constraints(sol.schedule)]
    cfg = sol.config
    by_id = {f.id: f for f in sol.flows}
    be_flows = [f for f in sol.flows if sol.assigned[f.id] == BE]
    an = Analyzer(sol.flows, sol.schedule, cfg, be_flows)
    present = {fid: c for fid, c in sol.assigned.items() if c in (A, B) and sol.scheduled[fid]}
    rep = an.analyze(present)
    for fid, ok in sol.scheduled.items():
        f = by_id[fid]
        if f.static_prio == TT and sol.assigned[fid] != TT:
            problems.append(f"flow {fid}: static TT flow demoted")
        if not ok:
            continue
        cls = sol.assigned[fid]
        if cls == TT:
            if fid not in sol.schedule:
                problems.append(f"flow {fid}: scheduled TT flow has no placement")
            elif sol.schedule.placement(fid).finish() > f.ddl:
                problems.append(f"flow {fid}: TT latency exceeds deadline")
        elif cls in (A, B):
            e = rep[fid]
            if not e.feasible:
                problems.append(f"flow {fid}: bound {e.rt} exceeds deadline {f.ddl}")
    return problems


# serialisation

def solution_to_dict(sol: Solution, net):
    from .io import flows_to_dict, network_to_dict
    from .tt import emit_gcl

    flows = []
    for f in sol.flows:
        rt = sol.rt(f.id) if sol.scheduled[f.id] else None
        flows.append({"id": f.id, "class_static": f.static_prio.label,
                      "class_assigned": sol.assigned[f.id].label,
                      "scheduled": bool(sol.scheduled[f.id]), "rt_ns": rt, "ddl_ns": f.ddl})
    tt = []
    for fid in sol.schedule.flows():
        p = sol.schedule.placement(fid)
        tt.append({"id": fid, "links": [list(l.key) for l in p.links],
                   "offsets_ns": list(p.offsets), "queues": list(p.queues)})
    return {
        "algo": sol.algo,
        "objective": sol.objective,
        "n_flows": len(sol.flows),
        "hyperperiod_ns": sol.schedule.T,
        "config": sol.config.to_dict(),
        "flows": flows,
        "tt_schedule": tt,
        "gcl": emit_gcl(sol.schedule, net, sol.config),
        "network": network_to_dict(net),
        "flow_set": flows_to_dict(sol.flows)["flows"],
    }


def solution_from_dict(doc):
    """Rebuild ``(net, Solution)`` from :func:`solution_to_dict` output."""
    from .io import flows_from_dict, network_from_dict

    net = network_from_dict(doc["network"])
    flows = flows_from_dict({"flows": doc["flow_set"]}, net)
    config = ShaperConfig.from_dict(doc["config"])
    by_id = {f.id: f for f in flows}
    schedule = TtSchedule(doc["hyperperiod_ns"])
    for p in doc["tt_schedule"]:
        schedule = place_raw(schedule, by_id[p["id"]], p["offsets_ns"], p["queues"], config)
    assigned = {d["id"]: PriorityClass.parse(d["class_assigned"]) for d in doc["flows"]}
    scheduled = {d["id"]: d["scheduled"] for d in doc["flows"]}
    report = RtaReport()
    be_flows = [f for f in flows if assigned[f.id] == BE]
    an = Analyzer(flows, schedule, config, be_flows)
    present = {fid: c for fid, c in assigned.items() if c in (A, B) and scheduled[fid]}
    report.update(an.analyze(present))
    for fid in schedule.flows():
        report[fid] = tt_entry(fid, schedule, by_id[fid].ddl)
    return net, Solution(flows, assigned, scheduled, schedule, report, doc["algo"], config)
