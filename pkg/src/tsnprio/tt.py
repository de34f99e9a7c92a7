"""Time-triggered window synthesis (ASAP), constraint checking and GCL emission.

A TT reservation of flow ``f`` on link ``l`` covers ``[phi, phi + pad + C)`` in
every period image. The preemptable gates close at ``phi``; the TT frame
starts at most ``pad`` later once a preempted fragment has cleared the wire.
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass

from .config import ShaperConfig
from .model import hyperperiod

TT_QUEUES = (0, 1)
# gate bitmap order: TT0, TT1, A, B, BE x4
GATES_IDLE = "00111111"
GATES_CLOSED = "00000000"


@dataclass(frozen=True)
class Reservation:
    link: tuple
    flow: int
    instance: int
    start: int
    length: int
    tt_queue: int

    @property
    def end(self):
        return self.start + self.length


@dataclass(frozen=True)
class Placement:
    """Per-hop offsets of one TT flow, relative to its release."""

    flow: int
    period: int
    ddl: int
    links: tuple  # Link objects along the route
    offsets: tuple
    tx: tuple  # frame wire time per hop
    lengths: tuple  # reservation length per hop (tx + pad)
    queues: tuple

    def arrival(self, h):
        """Earliest instant the frame can be in the hop-``h`` queue."""
        if h == 0:
            return self.offsets[0]
        prev = self.links[h - 1]
        return self.offsets[h - 1] + self.tx[h - 1] + prev.propagation + prev.proc_delay_at_dst

    def finish(self):
        return self.offsets[-1] + self.lengths[-1] + self.links[-1].propagation


@dataclass(frozen=True)
class Violation:
    constraint: str
    link: tuple
    flows: tuple
    times: tuple

    def __str__(self):
        return f"{self.constraint} on {self.link}: flows {self.flows} at {self.times}"


class TtSchedule:
    """Reservations of all placed TT flows over one hyperperiod.

    Instances are treated as values: :meth:`with_placement` returns a new
    schedule and leaves the receiver untouched.
    """

    def __init__(self, T: int):
        self.T = T
        self._placements = {}
        self._link_iv = {}  # link key -> sorted tuple of (start, end, fid, k, queue)
        self._queue_iv = {}  # (link key, q) -> sorted tuple of (arrival, end, fid, k)
        self._fold_cache = {}

    def copy(self):
        s = TtSchedule(self.T)
        s._placements = dict(self._placements)
        s._link_iv = dict(self._link_iv)
        s._queue_iv = dict(self._queue_iv)
        return s

    def with_placement(self, p: Placement):
        if self.T % p.period:
            raise AssertionError(f"period {p.period} does not divide hyperperiod {self.T}")
        s = self.copy()
        s._placements[p.flow] = p
        n_inst = self.T // p.period
        for h, link in enumerate(p.links):
            key = link.key
            new = [(p.offsets[h] + k * p.period, p.offsets[h] + p.lengths[h] + k * p.period,
                    p.flow, k, p.queues[h]) for k in range(n_inst)]
            s._link_iv[key] = tuple(sorted(s._link_iv.get(key, ()) + tuple(new)))
            qk = (key, p.queues[h])
            a = p.arrival(h)
            newq = [(a + k * p.period, p.offsets[h] + p.lengths[h] + k * p.period, p.flow, k)
                    for k in range(n_inst)]
            s._queue_iv[qk] = tuple(sorted(s._queue_iv.get(qk, ()) + tuple(newq)))
        return s

    def merge(self, other):
        """Disjoint union of two schedules over the same hyperperiod."""
        if other.T != self.T:
            raise ValueError("hyperperiods differ")
        s = self.copy()
        for p in other._placements.values():
            if p.flow in s._placements:
                raise ValueError(f"flow {p.flow} placed twice")
            s = s.with_placement(p)
        return s

    # queries

    def flows(self):
        return sorted(self._placements)

    def placement(self, fid) -> Placement:
        return self._placements[fid]

    def __contains__(self, fid):
        return fid in self._placements

    def links(self):
        return sorted(self._link_iv)

    def intervals(self, key):
        """Sorted ``(start, end)`` windows on a link over the hyperperiod."""
        return [(a, b) for a, b, *_ in self._link_iv.get(key, ())]

    def reservations(self, key):
        return [Reservation(key, fid, k, a, b - a, q) for a, b, fid, k, q in self._link_iv.get(key, ())]

    def queue_intervals(self, key, q):
        return list(self._queue_iv.get((key, q), ()))

    def offsets(self, fid):
        return self._placements[fid].offsets

    def _folded(self, kind, key, P):
        ck = (kind, key, P)
        hit = self._fold_cache.get(ck)
        if hit is not None:
            return hit
        src = self._link_iv.get(key, ()) if kind == "link" else self._queue_iv.get(key, ())
        pieces = []
        for a, b, *_ in src:
            a0 = a % P
            b0 = a0 + (b - a)
            if b - a >= P:
                pieces = [(0, P)]
                break
            if b0 <= P:
                pieces.append((a0, b0))
            else:
                pieces.append((a0, P))
                pieces.append((0, b0 - P))
        pieces.sort()
        merged = []
        for a, b in pieces:
            if merged and a <= merged[-1][1]:
                if b > merged[-1][1]:
                    merged[-1] = (merged[-1][0], b)
            else:
                merged.append((a, b))
        starts = [a for a, _ in merged]
        res = (merged, starts)
        self._fold_cache[ck] = res
        return res


def _earliest_free(merged, starts, lo, length):
    """Smallest t >= lo with [t, t+length) disjoint from the merged intervals."""
    t = lo
    i = bisect.bisect_right(starts, t) - 1
    if i >= 0 and merged[i][1] > t:
        t = merged[i][1]
    i += 1
    while i < len(merged) and merged[i][0] < t + length:
        t = max(t, merged[i][1])
        i += 1
    return t


def _conflict_end(merged, starts, a, e):
    """Largest end among folded intervals overlapping [a, e), or None."""
    j = bisect.bisect_left(starts, e)
    worst = None
    for x, y in merged[:j]:
        if y > a and x < e:
            worst = y if worst is None else max(worst, y)
    return worst


def tt_hops(f, config: ShaperConfig):
    tx = tuple(config.wire(f.size, l) for l in f.route)
    lengths = tuple(c + config.pad(l) for c, l in zip(tx, f.route))
    return tx, lengths


def asap_add(f, schedule: TtSchedule, config: ShaperConfig):
    """Place ``f`` at the earliest feasible offsets on every hop.

    Returns ``(True, new_schedule)`` on success and ``(False, schedule)``
    with the input untouched when the flow cannot meet its deadline.
    """
    if schedule.T % f.period:
        raise AssertionError(f"period {f.period} does not divide hyperperiod {schedule.T}")
    P = f.period
    links = f.route
    n = len(links)
    tx, lengths = tt_hops(f, config)
    # minimal time from the start of hop h to delivery
    tail = [0] * (n + 1)
    for h in range(n - 1, -1, -1):
        gap = links[h].proc_delay_at_dst if h < n - 1 else 0
        tail[h] = lengths[h] + links[h].propagation + gap + tail[h + 1]
    lb = [0] * n
    phi = [0] * n
    queues = [0] * n
    h = 0
    while h < n:
        key = links[h].key
        low = lb[h]
        if h > 0:
            prev = links[h - 1]
            low = max(low, phi[h - 1] + lengths[h - 1] + prev.propagation + prev.proc_delay_at_dst)
        merged, starts = schedule._folded("link", key, P)
        t = _earliest_free(merged, starts, low, lengths[h])
        if t + tail[h] > f.ddl:
            return False, schedule
        phi[h] = t
        if h == 0:
            queues[0] = 0
            h += 1
            continue
        prev = links[h - 1]
        a = phi[h - 1] + tx[h - 1] + prev.propagation + prev.proc_delay_at_dst
        e = t + lengths[h]
        need = None
        for q in TT_QUEUES:
            qm, qs = schedule._folded("queue", (key, q), P)
            end = _conflict_end(qm, qs, a, e)
            if end is None:
                queues[h] = q
                need = None
                break
            need = end if need is None else min(need, end)
        else:
            # both queues would interleave: delay the previous hop until our
            # arrival falls after the blocking frame has left
            lb[h - 1] = max(lb[h - 1], phi[h - 1] + (need - a))
            h -= 1
            continue
        h += 1
    p = Placement(f.id, f.period, f.ddl, tuple(links), tuple(phi), tx, lengths, tuple(queues))
    if p.finish() > f.ddl:
        return False, schedule
    return True, schedule.with_placement(p)


def tt_order(flows):
    return sorted(flows, key=lambda f: (f.period, f.ddl, f.id))


def asap_schedule(tt_flows, config: ShaperConfig, T=None):
    """ASAP-place flows in period, deadline, id order.

    Returns the schedule and a ``{flow id: placed}`` map.
    """
    tt_flows = list(tt_flows)
    if T is None:
        T = hyperperiod(tt_flows) if tt_flows else 1
    sched = TtSchedule(T)
    ok = {}
    for f in tt_order(tt_flows):
        ok[f.id], sched = asap_add(f, sched, config)
    return sched, ok


def place_raw(schedule: TtSchedule, f, offsets, queues, config: ShaperConfig):
    """Insert hand-chosen offsets without any feasibility check."""
    tx, lengths = tt_hops(f, config)
    p = Placement(f.id, f.period, f.ddl, tuple(f.route), tuple(offsets), tx, lengths, tuple(queues))
    return schedule.with_placement(p)


def _overlaps(ivs):
    """Pairs of overlapping entries in a list sorted by start."""
    out = []
    active = []  # entries whose end is still ahead
    for cur in ivs:
        active = [x for x in active if x[1] > cur[0]]
        for x in active:
            out.append((x, cur))
        active.append(cur)
    return out


def check_constraints(schedule: TtSchedule):
    """Every violated frame, flow-transmission, link or queue constraint."""
    out = []
    for fid in schedule.flows():
        p = schedule.placement(fid)
        for h, link in enumerate(p.links):
            if p.offsets[h] < 0 or p.offsets[h] + p.lengths[h] > p.period:
                out.append(Violation("frame", link.key, (fid,), (p.offsets[h],)))
            if h > 0:
                prev = p.links[h - 1]
                ready = p.offsets[h - 1] + p.lengths[h - 1] + prev.propagation + prev.proc_delay_at_dst
                if p.offsets[h] < ready:
                    out.append(Violation("flow-transmission", link.key, (fid,), (ready, p.offsets[h])))
    for key in schedule.links():
        for x, y in _overlaps(list(schedule._link_iv[key])):
            out.append(Violation("link", key, (x[2], y[2]), (x[0], y[0])))
    for (key, q), ivs in sorted(schedule._queue_iv.items()):
        for x, y in _overlaps(list(ivs)):
            out.append(Violation("queue", key, (x[2], y[2]), (x[0], y[0])))
    return out


def emit_gcl(schedule: TtSchedule, net, config: ShaperConfig | None = None):
    """Per-port gate control lists over one hyperperiod.

    A reservation first closes every gate for the preemption pad (so a
    held-over fragment can drain and no TT frame starts early), then opens
    only the owning TT queue. Outside reservations the AVB and BE gates are
    open. Entries are emitted only where the bitmap changes.
    """
    out = []
    for key in sorted(net.links):
        link = net.links[key]
        pad = config.pad(link) if config is not None else 0
        segments = []
        t = 0
        for r in schedule.reservations(key):
            if r.start > t:
                segments.append((t, GATES_IDLE))
            if pad:
                segments.append((r.start, GATES_CLOSED))
            segments.append((r.start + pad, "10000000" if r.tt_queue == 0 else "01000000"))
            t = r.end
        if t < schedule.T or not segments:
            segments.append((t, GATES_IDLE))
        entries = []
        for a, g in segments:
            if not entries or entries[-1][1] != g:
                entries.append((a, g))
        out.append({"port": net.port_name(link), "link": list(key), "cycle_ns": schedule.T,
                    "entries": [{"t_ns": a, "gates": g} for a, g in entries]})
    return out


def gcl_windows(port_gcl):
    """Reconstruct open windows of a GCL.

    Returns ``{0: [...], 1: [...], "pmac": [...], "closed": [...]}``;
    ``closed`` is where the preemptable gates are shut, i.e. the union of
    the TT reservations including their pads.
    """
    T = port_gcl["cycle_ns"]
    entries = port_gcl["entries"]
    wins = {0: [], 1: [], "pmac": [], "closed": []}
    for i, e in enumerate(entries):
        end = entries[i + 1]["t_ns"] if i + 1 < len(entries) else T
        g = e["gates"]
        if end <= e["t_ns"]:
            continue
        iv = (e["t_ns"], end)
        if g[0] == "1":
            wins[0].append(iv)
        if g[1] == "1":
            wins[1].append(iv)
        wins["pmac" if g[2] == "1" else "closed"].append(iv)
    wins["closed"] = union(wins["closed"])
    return wins


def union(intervals):
    out = []
    for a, b in sorted(intervals):
        if out and a <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], b))
        else:
            out.append((a, b))
    return out


def rt_tt(fid, schedule: TtSchedule):
    """Worst-case latency of a placed TT flow, from release to last bit received."""
    if fid not in schedule:
        raise KeyError(f"flow {fid} has no TT placement")
    return schedule.placement(fid).finish()
