"""Worst-case latency bounds for TT and AVB flows.

TT flows are exact from their offsets. For an AVB flow of class X at one
egress port the bound is the least fixpoint of

    W = ceil((B + H(W) + Q(W) + N(W)*O + Closed(W)) * R / idleSlope_X) + C_f

where B is lower-priority blocking, H the class-A workload seen by class B,
Q the same-class workload, N(W) the number of TT windows a window of length W
can meet, O the per-window re-header (or guard-band) cost and Closed(W) the
largest TT-reserved time in any window of length W.

Arrival jitter of an interfering flow at a downstream hop is bounded by its
deadline minus its best-case latency, which holds for every admitted flow.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .config import ShaperConfig
from .model import PriorityClass, bytes_time, min_e2e, route_keys
from .tt import TtSchedule, rt_tt

A = PriorityClass.AVB_A
B = PriorityClass.AVB_B


class LinkTT:
    """TT window profile of one link, queried with vectors of window lengths."""

    def __init__(self, intervals, T):
        self.T = T
        iv = sorted(intervals)
        self.n = len(iv)
        self.starts = np.array([a for a, _ in iv], dtype=np.int64)
        self.ends = np.array([b for _, b in iv], dtype=np.int64)
        lens = self.ends - self.starts
        self.total = int(lens.sum())
        self.cum = np.concatenate(([0], np.cumsum(lens))).astype(np.int64)
        self.lens = lens
        # starts over two cycles for counting
        self.starts2 = np.concatenate((self.starts, self.starts + T))

    def _F(self, t):
        """Reserved time in [0, t) for arbitrary (array) t >= 0."""
        q, x = np.divmod(t, self.T)
        idx = np.searchsorted(self.starts, x, side="right") - 1
        inside = np.where(idx >= 0, np.minimum(x - self.starts[np.maximum(idx, 0)],
                                               self.lens[np.maximum(idx, 0)]), 0)
        before = np.where(idx >= 0, self.cum[np.maximum(idx, 0)], 0)
        return q * self.total + before + inside

    def closed_max(self, W):
        W = np.asarray(W, dtype=np.int64)
        if self.n == 0:
            return np.zeros_like(W)
        full, rem = np.divmod(W, self.T)
        s = self.starts[:, None]
        e = self.ends[:, None] + self.T
        r = rem[None, :]
        from_start = self._F(s + r) - self._F(s)
        to_end = self._F(e) - self._F(e - r)
        best = np.maximum(from_start.max(axis=0), to_end.max(axis=0))
        return full * self.total + best

    def count_max(self, W):
        """Upper bound on TT windows intersecting any window of length W."""
        W = np.asarray(W, dtype=np.int64)
        if self.n == 0:
            return np.zeros_like(W)
        full, rem = np.divmod(W, self.T)
        hi = np.searchsorted(self.starts2, self.starts[:, None] + rem[None, :], side="left")
        cnt = hi - np.arange(self.n)[:, None]
        return full * self.n + cnt.max(axis=0) + 1


def closed_time_max(schedule: TtSchedule, key, W):
    """Largest TT-reserved time on ``key`` within any window of length ``W``."""
    return int(LinkTT(schedule.intervals(key), schedule.T).closed_max(np.array([W]))[0])


@dataclass(frozen=True)
class RtaEntry:
    flow: int
    cls: PriorityClass
    rt: int | None
    ddl: int
    feasible: bool
    hops: tuple

    @property
    def rt_ns(self):
        return self.rt


class RtaReport(dict):
    """``{flow id: RtaEntry}`` with CSV export."""

    def feasible(self, fid):
        return self[fid].feasible

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["flow", "class", "rt_ns", "ddl_ns", "feasible", "hops_ns"])
            for fid in sorted(self):
                e = self[fid]
                w.writerow([fid, e.cls.label, "" if e.rt is None else e.rt, e.ddl, int(e.feasible),
                            ";".join("inf" if h is None else str(h) for h in e.hops)])


class Analyzer:
    """Hop and end-to-end bounds for AVB flows against a fixed TT schedule.

    Per-link results are memoised on the exact interfering sets, so
    re-analysing after a single class change only recomputes the links on
    that flow's route.
    """

    def __init__(self, flows, schedule: TtSchedule, config: ShaperConfig, be_flows=()):
        self.flows = {f.id: f for f in flows}
        self.schedule = schedule
        self.config = config
        self.be_links = set()
        for f in be_flows:
            self.be_links.update(route_keys(f.route))
        self._tt = {}
        self._cache = {}
        self._links = {}
        self._hopinfo = {}
        for f in self.flows.values():
            jit = max(f.ddl - min_e2e(f, config.include_overhead), 0)
            for h, l in enumerate(f.route):
                self._links[l.key] = l
                self._hopinfo[(f.id, l.key)] = (config.wire(f.size, l), f.period,
                                                 0 if h == 0 else jit, f.ddl)

    def link_tt(self, key):
        lt = self._tt.get(key)
        if lt is None:
            lt = self._tt[key] = LinkTT(self.schedule.intervals(key), self.schedule.T)
        return lt

    def _be_on(self, key):
        return self.config.be_everywhere or key in self.be_links

    def hop_bounds(self, key, a_ids, b_ids):
        """``{fid: bound or None}`` for every AVB flow crossing ``key``."""
        ck = (key, a_ids, b_ids)
        hit = self._cache.get(ck)
        if hit is not None:
            return hit
        out = {}
        be = self._be_on(key)
        out.update(self._class_bounds(key, sorted(a_ids), (), bool(b_ids) or be, True))
        out.update(self._class_bounds(key, sorted(b_ids), sorted(a_ids), be, False))
        self._cache[ck] = out
        return out

    def _arrays(self, key, ids):
        info = [self._hopinfo[(i, key)] for i in ids]
        if not info:
            z = np.zeros(0, dtype=np.int64)
            return z, z, z, z
        C, T, J, D = (np.array(col, dtype=np.int64) for col in zip(*info))
        return C, T, J, D

    def _class_bounds(self, key, ids, higher, lower_present, is_a):
        if not ids:
            return {}
        cfg = self.config
        link = self._links[key]
        R = link.rate
        idle = cfg.idle_slope(link, is_a)
        C, T, J, D = self._arrays(key, ids)
        Ch, Th, Jh, _ = self._arrays(key, higher)
        blocking = 0
        if lower_present:
            blocking = bytes_time(cfg.max_lp_frame, R)
        if cfg.preemption:
            blocking = max(blocking, bytes_time(cfg.np_residue + cfg.frag_overhead, R))
            per_window = bytes_time(cfg.frag_overhead, R)
        else:
            per_window = bytes_time(cfg.max_lp_frame, R)
        lt = self.link_tt(key)
        W = C.copy()
        done = np.zeros(len(ids), dtype=bool)
        bad = np.zeros(len(ids), dtype=bool)
        while True:
            Wc = W[:, None]
            Q = (-(-(Wc + J[None, :]) // T[None, :]) * C[None, :]).sum(axis=1) - C
            if len(higher):
                H = (-(-(Wc + Jh[None, :]) // Th[None, :]) * Ch[None, :]).sum(axis=1)
            else:
                H = 0
            num = blocking + H + Q + lt.count_max(W) * per_window + lt.closed_max(W)
            Wn = -(-num * R // idle) + C
            Wn = np.where(done | bad, W, Wn)
            bad |= Wn > D
            done |= (Wn == W) & ~bad
            W = np.where(bad, W, Wn)
            if (done | bad).all():
                break
        return {fid: (None if bad[i] else int(W[i])) for i, fid in enumerate(ids)}

    def population(self, present=None):
        return Population(self, present or {})

    def analyze(self, present, only=None):
        """Bounds for the AVB flows in ``present`` (``{fid: class}``).

        ``only`` restricts which flows get an entry; interference is always
        computed from the whole ``present`` map.
        """
        return self.population(present).report(only)

    def rt(self, fid, present):
        return self.population(present).entry(fid)

    def rt_of_set(self, ids, cls, context=None):
        """Bound of the smallest-deadline member with all of ``ids`` present as ``cls``.

        ``context`` adds other AVB flows (``{fid: class}``) as interference.
        """
        ids = list(ids)
        if not ids:
            raise ValueError("empty flow set")
        head = min(ids, key=lambda i: (self.flows[i].ddl, i))
        present = dict(context or {})
        present.update({i: cls for i in ids})
        return self.rt(head, present)

    def admit(self, present, order=None):
        """Drop infeasible flows one at a time until every remaining flow meets its deadline.

        Among infeasible flows the one first in ``order`` (default: deadline,
        then id) is removed. Returns the surviving map and its report.
        """
        pop = self.population(present)
        if order is None:
            order = lambda i: (self.flows[i].ddl, i)
        while True:
            rep = pop.report()
            bad = [fid for fid, e in rep.items() if not e.feasible]
            if not bad:
                return dict(pop.cls), rep
            pop.set(min(bad, key=order), None)

    def with_schedule(self, schedule, changed_links):
        """Analyzer over a new TT schedule differing only on ``changed_links``."""
        other = Analyzer.__new__(Analyzer)
        other.__dict__.update(self.__dict__)
        other.schedule = schedule
        changed = set(changed_links)
        other._tt = {k: v for k, v in self._tt.items() if k not in changed}
        other._cache = {k: v for k, v in self._cache.items() if k[0] not in changed}
        return other


class Population:
    """Mutable set of present AVB flows with incrementally maintained per-link sets."""

    def __init__(self, analyzer: Analyzer, present):
        self.an = analyzer
        self.cls = {}
        self._sets = {}
        self._frozen = {}
        for fid, c in present.items():
            self.set(fid, c)

    def set(self, fid, cls):
        """Put ``fid`` in class ``cls`` (A or B); ``None`` removes it."""
        old = self.cls.get(fid)
        if old == cls:
            return
        for key in route_keys(self.an.flows[fid].route):
            sets = self._sets.setdefault(key, (set(), set()))
            if old is not None:
                sets[0 if old == A else 1].discard(fid)
            if cls is not None:
                sets[0 if cls == A else 1].add(fid)
            self._frozen.pop(key, None)
        if cls is None:
            self.cls.pop(fid, None)
        else:
            self.cls[fid] = cls

    def _bounds(self, key):
        fz = self._frozen.get(key)
        if fz is None:
            a, b = self._sets[key]
            fz = self._frozen[key] = (frozenset(a), frozenset(b))
        return self.an.hop_bounds(key, *fz)

    def entry(self, fid):
        f = self.an.flows[fid]
        hops = []
        total = 0
        ok = True
        n = len(f.route)
        for h, l in enumerate(f.route):
            b = self._bounds(l.key)[fid]
            hops.append(b)
            if b is None:
                ok = False
                continue
            total += b + l.propagation + (l.proc_delay_at_dst if h < n - 1 else 0)
        rt = total if ok else None
        return RtaEntry(fid, self.cls[fid], rt, f.ddl, ok and rt <= f.ddl, tuple(hops))

    def report(self, only=None):
        rep = RtaReport()
        for fid in sorted(self.cls if only is None else only):
            rep[fid] = self.entry(fid)
        return rep

    def all_feasible(self):
        return all(self.entry(fid).feasible for fid in self.cls)


def tt_entry(fid, schedule, ddl):
    rt = rt_tt(fid, schedule)
    p = schedule.placement(fid)
    return RtaEntry(fid, PriorityClass.TT, rt, ddl, rt <= ddl, tuple(p.lengths))


def rt_avb(f, cls, assignment, schedule, config, flows, be_flows=()):
    """One-shot bound for ``f`` as ``cls`` with ``assignment`` as the AVB population."""
    an = Analyzer(flows, schedule, config, be_flows)
    present = {fid: c for fid, c in assignment.items() if c in (A, B)}
    present[f.id] = cls
    return an.rt(f.id, present)
