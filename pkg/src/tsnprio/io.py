"""JSON ingest and export of networks and flow sets."""
from __future__ import annotations

import json

from .model import (
    MTU_BYTES,
    Flow,
    Link,
    Network,
    Node,
    NodeKind,
    PriorityClass,
    RoutingError,
    ValidationError,
    shortest_route,
    validate_flow,
)


def network_from_dict(doc) -> Network:
    problems = []
    nodes = []
    for i, n in enumerate(doc.get("nodes", [])):
        try:
            nodes.append(Node(int(n["id"]), NodeKind(n["kind"])))
        except (KeyError, ValueError) as e:
            problems.append(f"node #{i}: {e}")
    links = []
    for i, l in enumerate(doc.get("links", [])):
        try:
            links.append(Link(int(l["src"]), int(l["dst"]), int(l["rate_bps"]),
                              int(l.get("propagation_ns", 0)), int(l.get("proc_ns", 0))))
        except (KeyError, ValueError) as e:
            problems.append(f"link #{i}: {e}")
    if problems:
        raise ValidationError(problems)
    return Network(nodes, links)


def network_to_dict(net: Network):
    return {
        "nodes": [{"id": n.id, "kind": n.kind.value} for n in sorted(net.nodes.values(), key=lambda n: n.id)],
        "links": [
            {"src": l.src, "dst": l.dst, "rate_bps": l.rate,
             "propagation_ns": l.propagation, "proc_ns": l.proc_delay_at_dst}
            for _, l in sorted(net.links.items())
        ],
    }


def flows_from_dict(doc, net: Network):
    """Parse a flow document; missing routes are filled in with :func:`shortest_route`.

    Raises :class:`ValidationError` listing every bad flow, or
    :class:`RoutingError` when a flow has no route.
    """
    flows = []
    problems = []
    seen = set()
    for i, d in enumerate(doc.get("flows", [])):
        try:
            f = Flow(int(d["id"]), int(d["src"]), int(d["dst"]), int(d["period_ns"]),
                     int(d.get("size_b", MTU_BYTES)), int(d["ddl_ns"]),
                     PriorityClass.parse(d["class"]))
        except ValidationError as e:
            problems.extend(f"flow #{i}: {p}" for p in e.problems)
            continue
        except (KeyError, ValueError, TypeError) as e:
            problems.append(f"flow #{i}: {e}")
            continue
        if f.id in seen:
            problems.append(f"flow {f.id}: duplicate id")
        seen.add(f.id)
        if d.get("route"):
            hops = [int(x) for x in d["route"]]
            try:
                f = f.with_route(net.link(a, b) for a, b in zip(hops, hops[1:]))
            except KeyError:
                problems.append(f"flow {f.id}: route uses an unknown link")
                continue
        flows.append(f)
    for f in flows:
        problems.extend(validate_flow(net, f))
    if problems:
        raise ValidationError(problems)
    out = []
    for f in flows:
        if not f.route:
            f = f.with_route(shortest_route(net, f.src, f.dst))
        out.append(f)
    return out


def flow_to_dict(f: Flow):
    d = {"id": f.id, "src": f.src, "dst": f.dst, "period_ns": f.period, "size_b": f.size,
         "ddl_ns": f.ddl, "class": f.static_prio.label}
    if f.route:
        d["route"] = [f.route[0].src] + [l.dst for l in f.route]
    return d


def flows_to_dict(flows):
    return {"flows": [flow_to_dict(f) for f in flows]}


def dump_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_json(path):
    with open(path) as fh:
        return json.load(fh)


__all__ = [
    "network_from_dict", "network_to_dict", "flows_from_dict", "flows_to_dict",
    "flow_to_dict", "dump_json", "load_json", "RoutingError",
]
