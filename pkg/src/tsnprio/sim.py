"""Discrete-event simulation of TSN egress ports.

Each directed link is one egress port with two express TT queues, AVB-A and
AVB-B queues behind credit-based shapers and a best-effort queue. Gates
follow the GCL. A preemptable frame still on the wire when its gate closes
is cut after at most ``np_residue`` bytes (or at the 64-byte minimum
fragment) and later resumes with ``frag_overhead`` extra bytes.

Credits are kept as integers in bit*ns/s units (bits scaled by 1e9) so
that slopes in bit/s integrate exactly over integer nanoseconds.
"""
from __future__ import annotations

import csv
import heapq
from dataclasses import dataclass, field

import numpy as np

from .config import ShaperConfig
from .model import (
    MIN_FRAME_BYTES,
    NS_PER_S,
    WIRE_OVERHEAD_BYTES,
    ConfigurationError,
    PriorityClass,
    bytes_time,
    shortest_route,
)
from .tt import emit_gcl

TT = PriorityClass.TT
A = PriorityClass.AVB_A
B = PriorityClass.AVB_B
BE = PriorityClass.BE

# event kinds double as same-time priorities
GATE, TX_END, ARRIVE, WAKE = 0, 1, 2, 3
_EVENT_NAMES = {TX_END: "tx_end", GATE: "gate", ARRIVE: "arrive", WAKE: "wake"}
# gate bitmap positions
_GATE_BIT = {A: 2, B: 3, BE: 4}
BACKGROUND_FLOW = -1
# TT queue keys, kept apart from the IntEnum class keys
_TTQ = ("tt0", "tt1")


def validate_gcl(port_gcl):
    """Raise :class:`ConfigurationError` on an unsorted or contradictory GCL."""
    T = port_gcl["cycle_ns"]
    entries = port_gcl["entries"]
    if not entries or entries[0]["t_ns"] != 0:
        raise ConfigurationError(f"{port_gcl.get('port')}: GCL must start at t=0")
    last = -1
    for e in entries:
        t, g = e["t_ns"], e["gates"]
        if t <= last or t >= T:
            raise ConfigurationError(f"{port_gcl.get('port')}: GCL entries unsorted or overlapping at t={t}")
        if len(g) != 8 or set(g) - {"0", "1"}:
            raise ConfigurationError(f"{port_gcl.get('port')}: bad gate bitmap {g!r}")
        if g[0] == "1" and g[1] == "1":
            raise ConfigurationError(f"{port_gcl.get('port')}: both TT queues open at t={t}")
        if (g[0] == "1" or g[1] == "1") and "1" in g[2:]:
            raise ConfigurationError(f"{port_gcl.get('port')}: TT and preemptable gates open together at t={t}")
        last = t


class Frame:
    __slots__ = ("fid", "inst", "cls", "route", "queues", "release", "hop", "remaining", "wire")

    def __init__(self, fid, inst, cls, route, queues, release, wire):
        self.fid = fid
        self.inst = inst
        self.cls = cls
        self.route = route
        self.queues = queues
        self.release = release
        self.hop = 0
        self.wire = wire  # bytes on the wire per hop, incl. preamble/IFG if modelled
        self.remaining = wire


class Port:
    def __init__(self, link, gcl, config: ShaperConfig):
        self.link = link
        self.rate = link.rate
        self.entries = [(e["t_ns"], e["gates"]) for e in gcl["entries"]]
        self.cycle = gcl["cycle_ns"]
        self.gates = self.entries[0][1]
        self.queues = {_TTQ[0]: [], _TTQ[1]: [], A: [], B: [], BE: []}
        self.heads = {k: 0 for k in self.queues}
        self.idle = {A: config.idle_slope(link, True), B: config.idle_slope(link, False)}
        self.credit = {A: 0, B: 0}
        self.last = 0
        self.tx = None  # (frame, start, fragment bytes, end)
        self.version = 0
        self.pending = None  # preempted frame awaiting resumption
        self.wake_at = None

    def qlen(self, q):
        return len(self.queues[q]) - self.heads[q]

    def head(self, q):
        return self.queues[q][self.heads[q]]

    def pop(self, q):
        f = self.queues[q][self.heads[q]]
        self.heads[q] += 1
        if self.heads[q] > 64 and self.heads[q] * 2 > len(self.queues[q]):
            del self.queues[q][: self.heads[q]]
            self.heads[q] = 0
        return f

    def gate_open(self, cls):
        return self.gates[_GATE_BIT[cls]] == "1"

    def advance(self, t):
        """Integrate both credits over ``[last, t)``; the state is constant in between."""
        dt = t - self.last
        if dt <= 0:
            return
        sending = self.tx[0].cls if self.tx else None
        for c in (A, B):
            idle = self.idle[c]
            if sending == c:
                self.credit[c] += (idle - self.rate) * dt
            elif not self.gate_open(c):
                pass
            elif self.qlen(c) or (self.pending is not None and self.pending.cls == c):
                self.credit[c] += idle * dt
            elif self.credit[c] < 0:
                self.credit[c] = min(0, self.credit[c] + idle * dt)
            else:
                self.credit[c] = 0
        self.last = t

    def settle(self, c):
        """Standard CBS reset: positive credit is lost when the class queue empties."""
        if self.credit[c] > 0 and not self.qlen(c) and not (self.pending is not None and self.pending.cls == c):
            self.credit[c] = 0

    def next_close(self, t, cls):
        """First instant at or after ``t`` when ``cls``'s gate closes."""
        bit = _GATE_BIT[cls]
        base = t - t % self.cycle
        for k in range(2):
            for et, g in self.entries:
                at = base + k * self.cycle + et
                if at > t and g[bit] == "0":
                    return at
        return None


@dataclass
class FlowStats:
    count: int = 0
    max_delay: int = 0
    total: int = 0
    misses: int = 0

    @property
    def mean_delay(self):
        return self.total / self.count if self.count else 0.0


@dataclass
class SimResult:
    stats: dict
    released: int
    delivered: int
    in_flight: int
    end_time: int
    transmissions: list = field(default_factory=list)  # (fid, inst, link key, start, end, last)
    credits: dict = field(default_factory=dict)

    def soundness_violations(self, report):
        """Flows whose observed worst delay exceeds the analytic bound."""
        out = []
        for fid, st in sorted(self.stats.items()):
            e = report.get(fid)
            if e is None or e.rt is None or not st.count:
                continue
            if st.max_delay > e.rt:
                out.append((fid, st.max_delay, e.rt))
        return out


class Simulator:
    def __init__(self, net, flows, assigned, schedule, config: ShaperConfig, gcls=None,
                 release="sync", seed=0, be_load=0.0, trace=False):
        self.net = net
        self.config = config
        self.schedule = schedule
        self.T = schedule.T
        if gcls is None:
            gcls = emit_gcl(schedule, net, config)
        self.ports = {}
        for g in gcls:
            validate_gcl(g)
            key = tuple(g["link"])
            self.ports[key] = Port(net.links[key], g, config)
        self.flows = sorted(flows, key=lambda f: f.id)
        self.assigned = assigned
        self.release = release
        self.rng = np.random.default_rng(seed)
        self.be_load = be_load
        self.heap = []
        self.seq = 0
        self.trace = [] if trace else None
        self.tx_log = []
        self.stats = {}
        self.released = 0
        self.delivered = 0

    # event plumbing

    def push(self, t, kind, payload):
        self.seq += 1
        heapq.heappush(self.heap, (t, kind, self.seq, payload))

    def log(self, t, port, event, fid, nbytes):
        if self.trace is not None:
            self.trace.append((t, port, event, fid, nbytes))

    def wake(self, t, key):
        port = self.ports[key]
        if port.wake_at is not None and port.wake_at <= t:
            return
        port.wake_at = t
        self.push(t, WAKE, key)

    # traffic

    def _wire(self, size):
        return size + (WIRE_OVERHEAD_BYTES if self.config.include_overhead else 0)

    def _releases(self, until):
        for f in self.flows:
            cls = self.assigned[f.id]
            if cls == TT:
                p = self.schedule.placement(f.id)
                phase, queues, first = 0, p.queues, p.offsets[0]
            else:
                phase = int(self.rng.integers(f.period)) if self.release == "random" else 0
                queues, first = None, 0
            k = 0
            while phase + k * f.period < until:
                r = phase + k * f.period
                fr = Frame(f.id, k, cls, f.route, queues, r, self._wire(f.size))
                self.push(r + first, ARRIVE, fr)
                self.released += 1
                k += 1
        if self.be_load > 0:
            self._background(until)

    def _background(self, until):
        es = sorted(self.net.end_stations())
        wire = self._wire(self.config.max_lp_frame - WIRE_OVERHEAD_BYTES)
        routes = {}
        inst = 0
        for src in es:
            link = self.net.link(src, self.net.successors(src)[0])
            mean_gap = bytes_time(wire, link.rate) / self.be_load
            t = 0.0
            while True:
                t += self.rng.exponential(mean_gap)
                if t >= until:
                    break
                others = [e for e in es if e != src]
                dst = others[int(self.rng.integers(len(others)))]
                if (src, dst) not in routes:
                    routes[(src, dst)] = shortest_route(self.net, src, dst)
                fr = Frame(BACKGROUND_FLOW, inst, BE, routes[(src, dst)], None, int(t), wire)
                inst += 1
                self.push(int(t), ARRIVE, fr)
                self.released += 1

    # port behaviour

    def enqueue(self, t, fr):
        link = fr.route[fr.hop]
        key = link.key
        port = self.ports[key]
        port.advance(t)
        q = _TTQ[fr.queues[fr.hop]] if fr.cls == TT else fr.cls
        port.queues[q].append(fr)
        fr.remaining = fr.wire
        self.log(t, port.link.key, "enqueue", fr.fid, fr.wire)
        self.wake(t, key)

    def start(self, t, port, fr, nbytes):
        end = t + bytes_time(nbytes, port.rate)
        port.tx = (fr, t, nbytes, end)
        port.version += 1
        self.push(end, TX_END, (port.link.key, port.version))
        self.log(t, port.link.key, "tx_start", fr.fid, nbytes)

    def try_send(self, t, port):
        if port.tx is not None:
            return
        for q in (0, 1):
            if port.gates[q] == "1" and port.qlen(_TTQ[q]):
                fr = port.pop(_TTQ[q])
                self.start(t, port, fr, fr.remaining)
                return
        pend = port.pending
        if pend is not None:
            if port.gate_open(pend.cls):
                port.pending = None
                self.start(t, port, pend, pend.remaining + self.config.frag_overhead)
            return
        wait = None
        for c in (A, B, BE):
            if not port.qlen(c) or not port.gate_open(c):
                continue
            if c != BE and port.credit[c] < 0:
                dt = -(-(-port.credit[c]) // port.idle[c])
                wait = dt if wait is None else min(wait, dt)
                continue
            fr = port.head(c)
            if not self.config.preemption:
                close = port.next_close(t, c)
                if close is not None and t + bytes_time(fr.remaining, port.rate) > close:
                    continue
            port.pop(c)
            self.start(t, port, fr, fr.remaining)
            return
        if wait is not None:
            self.wake(t + wait, port.link.key)

    def on_tx_end(self, t, key, version):
        port = self.ports[key]
        if port.tx is None or port.version != version:
            return
        port.advance(t)
        fr, start, nbytes, end = port.tx
        port.tx = None
        done = fr.remaining <= nbytes
        if fr.cls == TT or fr.fid != BACKGROUND_FLOW:
            self.tx_log.append((fr.fid, fr.inst, key, start, end, done))
        if not done:
            # preempted fragment: ``remaining`` was already cut back
            port.pending = fr
            self.log(t, key, "preempted", fr.fid, nbytes)
        else:
            self.log(t, key, "tx_end", fr.fid, nbytes)
            link = port.link
            if fr.hop == len(fr.route) - 1:
                self.deliver(t + link.propagation, fr)
            else:
                fr.hop += 1
                self.push(t + link.propagation + link.proc_delay_at_dst, ARRIVE, fr)
        if fr.cls in (A, B):
            port.settle(fr.cls)
        self.try_send(t, port)

    def on_gate(self, t, key, idx):
        port = self.ports[key]
        port.advance(t)
        et, g = port.entries[idx]
        port.gates = g
        self.log(t, key, "gate", -1, int(g, 2))
        if port.tx is not None:
            fr, start, nbytes, end = port.tx
            if fr.cls != TT and not port.gate_open(fr.cls) and self.config.preemption:
                self.preempt(t, port)
        nxt = idx + 1
        base = t - et
        if nxt == len(port.entries):
            nxt, base = 0, base + port.cycle
        at = base + port.entries[nxt][0]
        if at <= self.stop_at:
            self.push(at, GATE, (key, nxt))
        self.wake(t, key)

    def preempt(self, t, port):
        cfg = self.config
        fr, start, nbytes, end = port.tx
        sent = (t - start) * port.rate // (8 * NS_PER_S)
        rest = nbytes - sent
        if rest <= cfg.np_residue:
            return
        hold = max(0, MIN_FRAME_BYTES - sent)
        if rest - hold < MIN_FRAME_BYTES:
            return
        new_end = max(t, start + bytes_time(sent + hold, port.rate))
        fr.remaining = rest - hold
        port.tx = (fr, start, sent + hold, new_end)
        port.version += 1
        self.push(new_end, TX_END, (port.link.key, port.version))
        self.log(t, port.link.key, "preempt", fr.fid, sent + hold)

    def deliver(self, t, fr):
        self.delivered += 1
        self.log(t, fr.route[-1].key, "deliver", fr.fid, fr.wire)
        if fr.fid == BACKGROUND_FLOW:
            return
        d = t - fr.release
        st = self.stats.setdefault(fr.fid, FlowStats())
        st.count += 1
        st.total += d
        st.max_delay = max(st.max_delay, d)
        ddl = self._ddl.get(fr.fid)
        if ddl is not None and d > ddl:
            st.misses += 1

    # main loop

    def run(self, horizon):
        until = horizon * self.T
        slack = max((f.ddl for f in self.flows), default=0)
        self.stop_at = until + max(slack, self.T) + self.T
        self._ddl = {f.id: f.ddl for f in self.flows}
        for key in sorted(self.ports):
            self.push(0, GATE, (key, 0))
        self._releases(until)
        while self.heap:
            t, kind, _, payload = heapq.heappop(self.heap)
            if t > self.stop_at or (self.delivered == self.released and kind == GATE and t >= until):
                break
            if kind == ARRIVE:
                self.enqueue(t, payload)
            elif kind == TX_END:
                self.on_tx_end(t, *payload)
            elif kind == GATE:
                self.on_gate(t, *payload)
            else:
                port = self.ports[payload]
                if port.wake_at == t:
                    port.wake_at = None
                port.advance(t)
                self.try_send(t, port)
        end = min(t, self.stop_at) if self.heap else self.stop_at
        for port in self.ports.values():
            port.advance(max(end, port.last))
        credits = {k: (p.credit[A], p.credit[B]) for k, p in sorted(self.ports.items())}
        return SimResult(self.stats, self.released, self.delivered, self.released - self.delivered,
                         end, self.tx_log, credits)

    def write_trace(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_ns", "port", "event", "flow", "bytes"])
            for t, key, ev, fid, nb in self.trace or ():
                w.writerow([t, self.net.port_name(self.net.links[key]), ev, fid, nb])


def _sim_flows(solution):
    return [f for f in solution.flows if solution.scheduled[f.id]]


def simulate(net, solution, gcls=None, horizon=10, release="sync", seed=0, be_load=0.0, trace=None):
    """Run ``horizon`` hyperperiods of all scheduled flows; returns a :class:`SimResult`.

    ``release`` is ``"sync"`` (every flow at phase 0) or ``"random"``
    (uniform phases drawn from ``seed``). ``be_load`` adds Poisson
    max-size background frames from every end station at that fraction of
    the access link rate; compare against bounds computed with
    ``be_everywhere`` then. ``trace`` is an optional CSV path.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least one hyperperiod")
    if release not in ("sync", "random"):
        raise ValueError("release must be 'sync' or 'random'")
    sim = Simulator(net, _sim_flows(solution), solution.assigned, solution.schedule, solution.config,
                    gcls, release, seed, be_load, trace is not None)
    res = sim.run(horizon)
    if trace is not None:
        sim.write_trace(trace)
    return res


@dataclass(frozen=True)
class ReplayViolation:
    flow: int
    link: tuple
    instance: int
    start: int
    end: int
    window: tuple

    def __str__(self):
        return (f"flow {self.flow} instance {self.instance} on {self.link}: sent [{self.start}, {self.end}) "
                f"outside reservation [{self.window[0]}, {self.window[1]})")


def replay_check(net, solution, gcls=None, background=False, seed=0):
    """One hyperperiod of TT traffic; every TT frame must sit inside its reservation.

    With ``background`` every end station also saturates its link with
    max-size best-effort frames, so TT windows must absorb preemption
    hold-over.
    """
    sched = solution.schedule
    tt = [f for f in solution.flows if f.id in sched]
    assigned = {f.id: TT for f in tt}
    sim = Simulator(net, tt, assigned, sched, solution.config, gcls, "sync", seed,
                    1.0 if background else 0.0)
    res = sim.run(1)
    seen = set()
    out = []
    for fid, inst, key, start, end, last in res.transmissions:
        if assigned.get(fid) != TT:
            continue
        p = sched.placement(fid)
        h = [l.key for l in p.links].index(key)
        w0 = p.offsets[h] + inst * p.period
        w1 = w0 + p.lengths[h]
        seen.add((fid, inst, h))
        if start < w0 or end > w1:
            out.append(ReplayViolation(fid, key, inst, start, end, (w0, w1)))
    for f in tt:
        p = sched.placement(f.id)
        for k in range(sched.T // f.period):
            for h, l in enumerate(p.links):
                if (f.id, k, h) not in seen:
                    w0 = p.offsets[h] + k * p.period
                    out.append(ReplayViolation(f.id, l.key, k, -1, -1, (w0, w0 + p.lengths[h])))
    return out
