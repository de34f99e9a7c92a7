"""Exhaustive optimum over class assignments, for small instances.

For every subset of AVB flows promoted to TT (placed ASAP after the static
TT set, in the proposed algorithm's promotion order) the remaining AVB flows
are searched over {A, B, dropped}. AVB bounds only grow when flows are
added, so a partial assignment that is already infeasible is pruned.
"""
from __future__ import annotations

from itertools import combinations

from .adjust import BE, TT, _static_tt, promotion_order, split_components
from .config import ShaperConfig
from .model import hyperperiod
from .rta import A, B, Analyzer
from .tt import asap_add


def _best_avb(an, ids, floor):
    """Largest number of ``ids`` that can be simultaneously feasible as A or B.

    Returns ``(count, assignment)``; only results above ``floor`` are sought.
    """
    best = [floor, None]
    pop = an.population({})

    def dfs(i, count):
        if count > best[0]:
            best[0], best[1] = count, dict(pop.cls)
        if i == len(ids) or count + len(ids) - i <= best[0]:
            return
        fid = ids[i]
        for cls in (A, B):
            pop.set(fid, cls)
            if pop.all_feasible():
                dfs(i + 1, count + 1)
            pop.set(fid, None)
        dfs(i + 1, count)

    dfs(0, 0)
    return best[0], best[1]


def brute_force_component(flows, kind, config, T, be_flows=()):
    """Optimal number of scheduled flows in one component."""
    base, _ = _static_tt(flows, config, T)
    n_static = sum(1 for f in flows if f.static_prio == TT and f.id in base)
    order = promotion_order(flows, kind, base, T)
    best = -1
    for r in range(len(order) + 1):
        for subset in combinations(range(len(order)), r):
            sched = base
            for i in subset:
                _, sched = asap_add(order[i], sched, config)
            promoted = {order[i].id for i in subset}
            placed = sum(1 for fid in promoted if fid in sched)
            rest = [f.id for f in order if f.id not in promoted]
            if n_static + placed + len(rest) <= best:
                continue
            an = Analyzer(flows, sched, config, be_flows)
            n_avb, _ = _best_avb(an, rest, best - n_static - placed)
            best = max(best, n_static + placed + n_avb)
    return best


def brute_force(net, flows, config=None):
    """Optimal objective over all class assignments of the whole flow set."""
    config = config or ShaperConfig()
    flows = sorted(flows, key=lambda f: f.id)
    if not flows:
        return 0
    T = hyperperiod(flows)
    be_flows = [f for f in flows if f.static_prio == BE]
    total = len(be_flows)
    for fl, kind in split_components(flows):
        total += brute_force_component(fl, kind, config, T, be_flows)
    return total
