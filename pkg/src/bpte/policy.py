"""Distance-vector routing, iterated policy application, and loop checks.

A policy maps (node, commodity) to the next node. The distance-vector
underlay always exists; temporary priority overrides may shadow it. Walks of
the combined map are the basis for all loop-freedom reasoning.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field

from .topology import AS_LEVEL, CommoditySpace, Topology, build_commodities

DV = "DV"
BP = "BP"

ROUTER_LEVEL = "router_level"


@dataclass(frozen=True)
class RoutingTable:
    """Shortest-hop next hops; unreachable pairs are simply absent."""
    granularity: str
    next_hop: dict[tuple[str, str], str]
    hop_count: dict[tuple[str, str], int]


@dataclass(frozen=True)
class TraversalSet:
    origin: str
    visited: tuple[str, ...]
    terminated_at_fixed_point: bool
    looped: bool = False
    no_route: bool = False


@dataclass(frozen=True)
class PolicyChain:
    """Run-length encoding of a traversal into DV/BP pathlets."""
    segments: tuple[tuple[str, int], ...]  # (policy kind, step count), step count >= 1


@dataclass
class PolicyView:
    """A routing state snapshot: DV underlay plus active priority overrides.

    ``rules`` maps (node, commodity) to the forced next node; ``hosts`` maps a
    commodity to the node that terminates it (its fixed point).
    """
    dvr: RoutingTable
    hosts: dict[str, str]
    rules: dict[tuple[str, str], str] = field(default_factory=dict)


def _as_graph(t: Topology) -> dict[str, list[str]]:
    adj = t.as_adjacency()
    return {n: sorted(nbrs) for n, nbrs in adj.items()}


def _router_graph(t: Topology) -> dict[str, list[str]]:
    adj: dict[str, set[str]] = {r: set() for r in t.routers}
    for l in t.links.values():
        adj[l.from_router].add(l.to_router)
    return {n: sorted(nbrs) for n, nbrs in adj.items()}


def _bellman_ford_unit(graph: dict[str, list[str]], dest: str):
    """Hop counts to dest via repeated relaxation over directed edges.

    Unit weights make this equivalent to a reverse BFS, but the relaxation
    form mirrors what each node would compute from neighbor advertisements.
    """
    dist = {dest: 0}
    frontier = deque([dest])
    # reverse adjacency on demand
    rev: dict[str, list[str]] = {n: [] for n in graph}
    for n, nbrs in graph.items():
        for m in nbrs:
            rev[m].append(n)
    while frontier:
        cur = frontier.popleft()
        for prev in rev[cur]:
            if prev not in dist:
                dist[prev] = dist[cur] + 1
                frontier.append(prev)
    return dist


def compute_dvr(t: Topology, granularity: str = AS_LEVEL) -> RoutingTable:
    """Shortest-hop table at the requested granularity.

    Next-hop ties are broken by the lowest node id so that repeated runs and
    platforms agree. AS-level nodes are ASes over peering adjacency;
    router-level nodes are routers over all links.
    """
    graph = _as_graph(t) if granularity == AS_LEVEL else _router_graph(t)
    next_hop: dict[tuple[str, str], str] = {}
    hops: dict[tuple[str, str], int] = {}
    for dest in sorted(graph):
        dist = _bellman_ford_unit(graph, dest)
        for n in graph:
            if n not in dist:
                continue
            hops[(n, dest)] = dist[n]
            if n == dest:
                continue
            for nbr in graph[n]:  # sorted: first minimal neighbor wins the tie
                if dist.get(nbr) == dist[n] - 1:
                    next_hop[(n, dest)] = nbr
                    break
    return RoutingTable(granularity=granularity, next_hop=next_hop, hop_count=hops)


def view_for(t: Topology, dvr: RoutingTable, commodities: CommoditySpace | None = None) -> PolicyView:
    if commodities is None:
        commodities = build_commodities(t, AS_LEVEL)
    hosts = dict(commodities.host)
    return PolicyView(dvr=dvr, hosts=hosts)


def apply_policy(view: PolicyView, node: str, commodity: str) -> str | None:
    """Next node for traffic at ``node`` heading to ``commodity``.

    An active priority rule takes precedence over the distance-vector hop;
    the hosting node is its own fixed point. None signals no route.
    """
    host = view.hosts.get(commodity, commodity)
    if node == host:
        return node
    forced = view.rules.get((node, commodity))
    if forced is not None:
        return forced
    return view.dvr.next_hop.get((node, host))


def traverse(view: PolicyView, origin: str, commodity: str, max_steps: int | None = None) -> TraversalSet:
    """Iterate apply_policy from origin until fixed point, revisit, or budget."""
    if max_steps is None:
        max_steps = len(view.dvr.hop_count) + len(view.hosts) + 8
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    visited = [origin]
    seen = {origin}
    cur = origin
    for _ in range(max_steps):
        nxt = apply_policy(view, cur, commodity)
        if nxt is None:
            return TraversalSet(origin, tuple(visited), False, no_route=True)
        if nxt == cur:
            return TraversalSet(origin, tuple(visited), True)
        if nxt in seen:
            visited.append(nxt)
            return TraversalSet(origin, tuple(visited), False, looped=True)
        visited.append(nxt)
        seen.add(nxt)
        cur = nxt
    return TraversalSet(origin, tuple(visited), False)


def loop_on_insert(view: PolicyView, pathlet_start: str, pathlet_end: str,
                   commodity: str, max_steps: int | None = None) -> bool:
    """Would forcing ``pathlet_start -> ... -> pathlet_end`` close a loop?

    Walks the current (pre-insertion) policy from the pathlet's end for at
    most |nodes| steps; the insertion is unsafe exactly when that walk comes
    back to the pathlet's start, since the start is the only node whose
    behaviour the insertion changes.
    """
    if max_steps is None:
        max_steps = len({n for n, _ in view.dvr.hop_count}) or 64
    host = view.hosts.get(commodity, commodity)
    cur = pathlet_end
    for _ in range(max_steps):
        if cur == pathlet_start:
            return True
        if cur == host:
            return False
        nxt = apply_policy(view, cur, commodity)
        if nxt is None or nxt == cur:
            return False
        cur = nxt
    return False


def chain_of(view: PolicyView, traversal: TraversalSet, commodity: str) -> PolicyChain:
    """Classify each traversal step as BP (rule-driven) or DV and run-length encode."""
    segments: list[tuple[str, int]] = []
    nodes = traversal.visited
    for i in range(len(nodes) - 1):
        kind = BP if view.rules.get((nodes[i], commodity)) == nodes[i + 1] else DV
        if segments and segments[-1][0] == kind:
            segments[-1] = (kind, segments[-1][1] + 1)
        else:
            segments.append((kind, 1))
    return PolicyChain(segments=tuple(segments))


def dump_traversals(view: PolicyView, pairs, path) -> None:
    """Debug CSV of traversals: origin,commodity,visited_sequence,loop_flag."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["origin", "commodity", "visited_sequence", "loop_flag"])
        for origin, commodity in pairs:
            ts = traverse(view, origin, commodity)
            w.writerow([origin, commodity, "|".join(ts.visited), int(ts.looped)])
