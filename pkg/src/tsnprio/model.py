"""Network, flow and priority vocabulary shared by the scheduler, analysis and simulator.

All times are integer nanoseconds. Rates are integer bits per second.
"""
from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional

NS_PER_S = 1_000_000_000
# preamble + start delimiter + inter-packet gap
WIRE_OVERHEAD_BYTES = 20
MIN_FRAME_BYTES = 64
MTU_BYTES = 1500

Duration = int


class ConfigurationError(ValueError):
    """Invalid network or configuration value."""


class RoutingError(ValueError):
    """No admissible route between two end stations."""


class ValidationError(ValueError):
    """Input document failed validation; ``problems`` lists every offending item."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class NodeKind(enum.Enum):
    ES = "es"
    SW = "sw"


class PriorityClass(enum.IntEnum):
    """Traffic classes; the integer value encodes the priority order."""

    BE = 0
    AVB_B = 1
    AVB_A = 2
    TT = 3

    @property
    def label(self):
        return _CLASS_LABELS[self]

    @classmethod
    def parse(cls, text):
        try:
            return _LABEL_CLASSES[text.lower()]
        except KeyError:
            raise ValidationError([f"unknown traffic class {text!r}"]) from None


_CLASS_LABELS = {
    PriorityClass.TT: "tt",
    PriorityClass.AVB_A: "avb_a",
    PriorityClass.AVB_B: "avb_b",
    PriorityClass.BE: "be",
}
_LABEL_CLASSES = {v: k for k, v in _CLASS_LABELS.items()}


@dataclass(frozen=True)
class Node:
    id: int
    kind: NodeKind

    @property
    def name(self):
        return f"{self.kind.value}{self.id}"


@dataclass(frozen=True)
class Link:
    src: int
    dst: int
    rate: int
    propagation: Duration = 0
    proc_delay_at_dst: Duration = 0

    @property
    def key(self):
        return (self.src, self.dst)


def transmission_time(size: int, link: Link, include_overhead: bool = True) -> Duration:
    """Wire occupation of ``size`` bytes on ``link`` in ns, rounded up."""
    if link.rate <= 0:
        raise ConfigurationError(f"link {link.src}->{link.dst} has non-positive rate")
    if include_overhead:
        if size < MIN_FRAME_BYTES:
            raise ValueError(f"frame of {size} B is below the Ethernet minimum")
        size += WIRE_OVERHEAD_BYTES
    return -(-size * 8 * NS_PER_S // link.rate)


def bytes_time(nbytes: int, rate: int) -> Duration:
    """Raw wire time of ``nbytes`` without framing overhead, rounded up."""
    return -(-nbytes * 8 * NS_PER_S // rate)


class Network:
    """Directed graph of end stations and switches."""

    def __init__(self, nodes: Iterable[Node], links: Iterable[Link]):
        self.nodes = {}
        problems = []
        for n in nodes:
            if n.id in self.nodes:
                problems.append(f"duplicate node id {n.id}")
            self.nodes[n.id] = n
        self.links = {}
        for l in links:
            if l.src not in self.nodes or l.dst not in self.nodes:
                problems.append(f"link {l.src}->{l.dst} references an unknown node")
            if l.key in self.links:
                problems.append(f"duplicate link {l.src}->{l.dst}")
            if l.rate <= 0:
                problems.append(f"link {l.src}->{l.dst} has non-positive rate")
            if l.src == l.dst:
                problems.append(f"self-loop link on node {l.src}")
            self.links[l.key] = l
        if problems:
            raise ValidationError(problems)
        self._succ = {nid: [] for nid in self.nodes}
        for s, d in sorted(self.links):
            self._succ[s].append(d)

    def link(self, src, dst) -> Link:
        return self.links[(src, dst)]

    def successors(self, nid):
        return self._succ[nid]

    def end_stations(self):
        return sorted(n.id for n in self.nodes.values() if n.kind is NodeKind.ES)

    def switches(self):
        return sorted(n.id for n in self.nodes.values() if n.kind is NodeKind.SW)

    def is_es(self, nid):
        return self.nodes[nid].kind is NodeKind.ES

    def port_name(self, link: Link):
        return f"{self.nodes[link.src].name}->{self.nodes[link.dst].name}"

    def is_connected(self):
        if not self.nodes:
            return True
        start = next(iter(self.nodes))
        seen = {start}
        todo = deque([start])
        undirected = {nid: set() for nid in self.nodes}
        for s, d in self.links:
            undirected[s].add(d)
            undirected[d].add(s)
        while todo:
            for m in undirected[todo.popleft()]:
                if m not in seen:
                    seen.add(m)
                    todo.append(m)
        return len(seen) == len(self.nodes)


def shortest_route(net: Network, src: int, dst: int) -> tuple:
    """Minimum-hop route between two end stations.

    Only switches may forward. Among equal-length routes the one choosing
    the smallest next-node id at every step wins.
    """
    if src == dst:
        raise ValueError("source and destination coincide")
    for nid in (src, dst):
        if nid not in net.nodes or not net.is_es(nid):
            raise ValueError(f"node {nid} is not an end station")
    # reverse BFS from dst gives hop distances usable for the forward walk
    pred = {nid: [] for nid in net.nodes}
    for s, d in net.links:
        pred[d].append(s)
    dist = {dst: 0}
    todo = deque([dst])
    while todo:
        v = todo.popleft()
        if v != dst and not (net.nodes[v].kind is NodeKind.SW):
            continue
        for u in pred[v]:
            if u not in dist:
                dist[u] = dist[v] + 1
                todo.append(u)
    if src not in dist:
        raise RoutingError(f"no route from {src} to {dst}")
    route = []
    cur = src
    while cur != dst:
        nxt = min(v for v in net.successors(cur)
                  if dist.get(v) == dist[cur] - 1 and (v == dst or not net.is_es(v)))
        route.append(net.link(cur, nxt))
        cur = nxt
    return tuple(route)


@dataclass(frozen=True)
class Flow:
    id: int
    src: int
    dst: int
    period: Duration
    size: int
    ddl: Duration
    static_prio: PriorityClass
    route: tuple = field(default=(), compare=True)

    def link_keys(self):
        return tuple(l.key for l in self.route)

    def with_route(self, route):
        return Flow(self.id, self.src, self.dst, self.period, self.size, self.ddl,
                    self.static_prio, tuple(route))


def validate_flow(net: Network, f: Flow):
    """Return a list of problems with ``f`` (empty when valid)."""
    problems = []
    tag = f"flow {f.id}"
    for nid in (f.src, f.dst):
        if nid not in net.nodes:
            problems.append(f"{tag}: unknown node {nid}")
        elif not net.is_es(nid):
            problems.append(f"{tag}: node {nid} is not an end station")
    if f.src == f.dst:
        problems.append(f"{tag}: src equals dst")
    if f.period <= 0:
        problems.append(f"{tag}: non-positive period")
    if not 0 < f.ddl <= f.period:
        problems.append(f"{tag}: deadline must satisfy 0 < ddl <= period")
    if f.size < MIN_FRAME_BYTES or f.size > MTU_BYTES:
        problems.append(f"{tag}: size {f.size} outside [{MIN_FRAME_BYTES}, {MTU_BYTES}]")
    if f.route:
        r = f.route
        if r[0].src != f.src or r[-1].dst != f.dst:
            problems.append(f"{tag}: route does not join src and dst")
        visited = {r[0].src}
        for a, b in zip(r, r[1:]):
            if a.dst != b.src:
                problems.append(f"{tag}: route is not contiguous")
                break
        for l in r:
            if l.key not in net.links:
                problems.append(f"{tag}: route uses unknown link {l.src}->{l.dst}")
            if l.dst in visited:
                problems.append(f"{tag}: route revisits node {l.dst}")
            visited.add(l.dst)
    return problems


def hyperperiod(flows) -> Duration:
    periods = [f.period for f in flows]
    if not periods:
        raise ValueError("hyperperiod of an empty flow set")
    return math.lcm(*periods)


def min_e2e(f: Flow, include_overhead=True) -> Duration:
    """Best-case end-to-end latency: pure transmission + propagation + switching."""
    total = 0
    for i, l in enumerate(f.route):
        total += transmission_time(f.size, l, include_overhead) + l.propagation
        if i < len(f.route) - 1:
            total += l.proc_delay_at_dst
    return total


def route_keys(route) -> tuple:
    return tuple(l.key for l in route)


def flows_by_id(flows):
    return {f.id: f for f in flows}


def find_flow(flows, fid) -> Optional[Flow]:
    for f in flows:
        if f.id == fid:
            return f
    return None
