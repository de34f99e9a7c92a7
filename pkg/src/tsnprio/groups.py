"""Flow groups, the FG-conflict graph and the adjustment precedence metrics."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .model import NS_PER_S, route_keys


@dataclass(frozen=True)
class FlowGroup:
    route: tuple  # link keys
    members: tuple  # flow ids, ascending

    def __len__(self):
        return len(self.members)


def group_flows(flows):
    """Partition flows by exact (directed, ordered) route.

    Groups are ordered by their smallest member id.
    """
    by_route = {}
    for f in sorted(flows, key=lambda f: f.id):
        by_route.setdefault(route_keys(f.route), []).append(f.id)
    groups = [FlowGroup(r, tuple(ids)) for r, ids in by_route.items()]
    groups.sort(key=lambda g: g.members[0])
    return groups


def tt_confliction(f, tt_flows, T_sched):
    """Number of TT frame instances per hyperperiod crossing the links of ``f``."""
    total = 0
    for key in route_keys(f.route):
        for g in tt_flows:
            if key in route_keys(g.route):
                if T_sched % g.period:
                    raise ValueError("hyperperiod not divisible by a TT period")
                total += T_sched // g.period
    return total


def tt_adjust(f, confliction):
    """Precedence for promotion to TT, in 1/s; zero confliction counts as one."""
    return Fraction(NS_PER_S, max(confliction, 1) * f.ddl)


def conflict_edge(route_i, route_j, size_i, size_j):
    shared = len(set(route_i) & set(route_j))
    return shared * (size_i + size_j)


class FgConflictGraph:
    """Undirected weighted graph over flow groups.

    ``sizes`` gives the member count used for each group's weight; by
    default the full group size.
    """

    def __init__(self, groups, sizes=None):
        self.groups = list(groups)
        if sizes is None:
            sizes = [len(g) for g in self.groups]
        self.sizes = list(sizes)
        self.weights = {i: {} for i in range(len(self.groups))}
        link_users = {}
        for i, g in enumerate(self.groups):
            for k in g.route:
                link_users.setdefault(k, []).append(i)
        pairs = set()
        for users in link_users.values():
            for a in users:
                for b in users:
                    if a < b:
                        pairs.add((a, b))
        for a, b in sorted(pairs):
            w = conflict_edge(self.groups[a].route, self.groups[b].route,
                              self.sizes[a], self.sizes[b])
            if w:
                self.weights[a][b] = w
                self.weights[b][a] = w
        self._index = {fid: i for i, g in enumerate(self.groups) for fid in g.members}

    def group_of(self, fid):
        return self._index[fid]

    def weight(self, i, j):
        return self.weights[i].get(j, 0)

    def degree(self, i):
        return sum(self.weights[i].values())

    def to_dot(self):
        lines = ["graph fg_conflict {"]
        for i, g in enumerate(self.groups):
            lines.append(f'  fg{i} [label="FG_R{i} ({len(g)} flows)"];')
        for i in range(len(self.groups)):
            for j, w in sorted(self.weights[i].items()):
                if i < j:
                    lines.append(f'  fg{i} -- fg{j} [label="u={w}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def avb_confliction(fid, graph: FgConflictGraph):
    return graph.degree(graph.group_of(fid))


def avb_adjust(f, confliction):
    """Precedence for staying AVB-A, in 1/s."""
    return Fraction(confliction * NS_PER_S, f.ddl)


@dataclass(frozen=True)
class Component:
    groups: tuple  # FlowGroup
    kind: str  # "parallel" | "crossed"

    def flow_ids(self):
        return sorted(fid for g in self.groups for fid in g.members)


def components(graph: FgConflictGraph):
    """Connected components of the conflict graph, ordered by smallest flow id."""
    seen = set()
    out = []
    for start in range(len(graph.groups)):
        if start in seen:
            continue
        comp = [start]
        seen.add(start)
        i = 0
        while i < len(comp):
            for j in sorted(graph.weights[comp[i]]):
                if j not in seen:
                    seen.add(j)
                    comp.append(j)
            i += 1
        gs = tuple(graph.groups[k] for k in sorted(comp))
        out.append(Component(gs, "parallel" if len(gs) == 1 else "crossed"))
    out.sort(key=lambda c: c.flow_ids()[0])
    return out
