"""Parametric benchmark topologies and random flow sets.

The shapes are reconstructions: ids are assigned switches first, then end
stations in switch order.
"""
from __future__ import annotations

import numpy as np

from .model import Flow, Link, Network, Node, NodeKind, PriorityClass, shortest_route

GBPS = 1_000_000_000
PERIODS_NS = (500_000, 1_000_000, 2_000_000, 4_000_000, 8_000_000)
DEFAULT_MIX = (0.10, 0.50, 0.25, 0.15)  # TT, A, B, BE
KINDS = ("ladder", "sae", "afdx")


def _build(n_sw, sw_edges, es_per_sw, rate, propagation, proc):
    nodes = [Node(i, NodeKind.SW) for i in range(n_sw)]
    edges = list(sw_edges)
    nid = n_sw
    for s in range(n_sw):
        for _ in range(es_per_sw):
            nodes.append(Node(nid, NodeKind.ES))
            edges.append((nid, s))
            nid += 1
    links = []
    for a, b in edges:
        links.append(Link(a, b, rate, propagation, proc))
        links.append(Link(b, a, rate, propagation, proc))
    return Network(nodes, links)


def ladder_edges(k):
    edges = []
    for rail in (0, k):
        edges += [(rail + i, rail + i + 1) for i in range(k - 1)]
    edges += [(i, i + k) for i in range(k)]
    return edges


def sae_edges():
    ring = [(i, (i + 1) % 5) for i in range(5)]
    return ring + [(0, 2), (1, 3)]


def afdx_edges():
    edges = []
    for base in (0, 4):
        edges += [(base + i, base + j) for i in range(4) for j in range(i + 1, 4)]
    edges += [(i, i + 4) for i in range(4)]
    return edges


def gen_topology(kind, k=4, es_per_sw=None, rate=GBPS, propagation=0, proc=0) -> Network:
    """``ladder`` (parameter ``k``), ``sae`` or ``afdx``."""
    kind = kind.lower()
    if kind == "ladder":
        if k < 1:
            raise ValueError("ladder needs k >= 1")
        return _build(2 * k, ladder_edges(k), es_per_sw or 1, rate, propagation, proc)
    if kind == "sae":
        return _build(5, sae_edges(), es_per_sw or 3, rate, propagation, proc)
    if kind == "afdx":
        return _build(8, afdx_edges(), es_per_sw or 4, rate, propagation, proc)
    raise ValueError(f"unknown topology kind {kind!r}")


def gen_flows(net: Network, n, mix=DEFAULT_MIX, seed=0, periods=PERIODS_NS, ddl_range=(0.5, 1.0),
              size=1500, max_per_pair=8):
    """``n`` random flows between uniformly drawn ordered end-station pairs.

    Each ordered pair carries at most ``max_per_pair`` flows.
    """
    mix = np.asarray(mix, dtype=float)
    if n <= 0:
        raise ValueError("n must be positive")
    if len(mix) != 4 or (mix < 0).any() or abs(mix.sum() - 1) > 1e-9:
        raise ValueError("mix must be four non-negative weights summing to 1")
    es = sorted(net.end_stations())
    pairs = [(a, b) for a in es for b in es if a != b]
    if n > len(pairs) * max_per_pair:
        raise ValueError(f"{n} flows exceed the pair budget {len(pairs) * max_per_pair}")
    rng = np.random.default_rng(seed)
    used = {}
    routes = {}
    classes = (PriorityClass.TT, PriorityClass.AVB_A, PriorityClass.AVB_B, PriorityClass.BE)
    flows = []
    for fid in range(n):
        while True:
            a, b = pairs[int(rng.integers(len(pairs)))]
            if used.get((a, b), 0) < max_per_pair:
                break
        used[(a, b)] = used.get((a, b), 0) + 1
        if (a, b) not in routes:
            routes[(a, b)] = shortest_route(net, a, b)
        period = int(periods[int(rng.integers(len(periods)))])
        ddl = int(round(period * rng.uniform(*ddl_range)))
        cls = classes[int(rng.choice(4, p=mix))]
        flows.append(Flow(fid, a, b, period, size, ddl, cls, routes[(a, b)]))
    return flows
