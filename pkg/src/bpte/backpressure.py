"""Priority-rule derivation: plain and foresight-aware backpressure, plus the
two loop-safe ways of stitching those rules onto a distance-vector underlay.

All four derivations share one core: per node, per outgoing peering link,
assign the commodity with the largest (forecast-adjusted) backlog
differential, each commodity to at most one link per node. A rule is only
emitted while the differential stays strictly positive, which keeps every
rule chain strictly ordered by descending backlog-plus-forecast and therefore
internally acyclic.
"""

from __future__ import annotations

import csv
import itertools
import logging
import math
import time
from dataclasses import dataclass, field, replace

from . import policy as policy_mod
from .policy import PolicyView, RoutingTable, loop_on_insert
from .topology import AS_LEVEL, CommoditySpace, Topology, build_commodities

logger = logging.getLogger(__name__)

EXHAUSTIVE_REORDER_LIMIT = 8


@dataclass(frozen=True)
class BacklogView:
    """Queued bytes per (AS, commodity) at snapshot_time."""
    u: dict[tuple[str, str], float]
    snapshot_time: float = 0.0

    def get(self, as_id: str, commodity: str) -> float:
        return self.u.get((as_id, commodity), 0.0)


@dataclass(frozen=True)
class ForecastView:
    """Expected bytes generated per (AS, commodity) over the next period."""
    g: dict[tuple[str, str], float]
    window_s: float = 0.0

    def get(self, as_id: str, commodity: str) -> float:
        return self.g.get((as_id, commodity), 0.0)

    @staticmethod
    def zero() -> "ForecastView":
        return ForecastView(g={})


@dataclass(frozen=True)
class RuleProposal:
    owner_as: str
    commodity: str
    via_link: str
    potential_bytes: float       # plain backlog differential, > 0
    foresight_delta_bytes: float  # differential minus the recipient forecast
    to_as: str = ""

    def sort_key(self):
        return (self.owner_as, self.commodity, self.via_link)


class NeighborFilter:
    """Which neighbor ASes a node may offload a commodity to.

    Layered: a base peering set per node (minus declared deny lists), an
    optional per-(node, destination-AS) restriction, and per-(node, commodity)
    overrides used by the exploratory stitcher when it excludes neighbors.
    """

    def __init__(self, base: dict[str, frozenset[str]],
                 hops_allowed: dict[tuple[str, str], frozenset[str]] | None = None,
                 host_of=None):
        self.base = base
        self.hops_allowed = hops_allowed
        self.host_of = host_of or (lambda c: c)
        self.overrides: dict[tuple[str, str], frozenset[str]] = {}

    def allowed(self, node: str, commodity: str) -> frozenset[str]:
        key = (node, commodity)
        if key in self.overrides:
            return self.overrides[key]
        if self.hops_allowed is not None:
            return self.hops_allowed.get((node, self.host_of(commodity)), frozenset())
        return self.base.get(node, frozenset())

    def without(self, node: str, commodity: str, neighbor: str) -> None:
        self.overrides[(node, commodity)] = self.allowed(node, commodity) - {neighbor}

    def copy(self) -> "NeighborFilter":
        clone = NeighborFilter(self.base, self.hops_allowed, self.host_of)
        clone.overrides = dict(self.overrides)
        return clone


def peering_filter(t: Topology, deny: dict[str, set[str]] | None = None,
                   commodities: CommoditySpace | None = None) -> NeighborFilter:
    """All peering neighbors, minus any (AS, neighbor) pairs denied by preference."""
    deny = deny or {}
    adj = t.as_adjacency()
    base = {n: frozenset(nbrs) - frozenset(deny.get(n, ())) for n, nbrs in adj.items()}
    host = commodities.host.get if commodities else (lambda c, d=None: c)
    return NeighborFilter(base=base, host_of=lambda c: host(c, c) if commodities else c)


def nhops_filter(t: Topology, dvr: RoutingTable, deny: dict[str, set[str]] | None = None,
                 commodities: CommoditySpace | None = None) -> NeighborFilter:
    """Restrict offloading to neighbors strictly closer (in hops) to the destination."""
    deny = deny or {}
    adj = t.as_adjacency()
    base = {n: frozenset(nbrs) - frozenset(deny.get(n, ())) for n, nbrs in adj.items()}
    hops = dvr.hop_count
    allowed: dict[tuple[str, str], frozenset[str]] = {}
    for n in sorted(t.ases):
        for dest in sorted(t.ases):
            if n == dest:
                continue
            mine = hops.get((n, dest))
            if mine is None:
                allowed[(n, dest)] = frozenset()
                continue
            ok = {nbr for nbr in base.get(n, ()) if hops.get((nbr, dest), math.inf) < mine}
            allowed[(n, dest)] = frozenset(ok)
    host = commodities.host.get if commodities else None
    return NeighborFilter(base=base, hops_allowed=allowed,
                          host_of=(lambda c: host(c, c)) if host else (lambda c: c))


@dataclass(frozen=True)
class LinkSlot:
    link_id: str
    to_as: str
    capacity_bps: float


def _outgoing_slots(t: Topology, usable_links: set[str] | None = None) -> dict[str, list[LinkSlot]]:
    """Per AS, its outgoing peering links sorted by link id."""
    out: dict[str, list[LinkSlot]] = {a: [] for a in t.ases}
    for lid in sorted(t.links):
        l = t.links[lid]
        if l.kind != "peering":
            continue
        if usable_links is not None and lid not in usable_links:
            continue
        out[t.as_of_router(l.from_router)].append(
            LinkSlot(link_id=lid, to_as=t.as_of_router(l.to_router), capacity_bps=l.capacity_bps))
    return out


def _rule_budget(commodities: CommoditySpace, n_links: int) -> int:
    """Rules allowed per link: one at AS granularity, ceil(N_p / N_L) at prefix level."""
    if commodities.kind == AS_LEVEL or n_links == 0:
        return 1
    n_p = max((len(v) for v in commodities.by_as.values()), default=1)
    return max(1, math.ceil(n_p / n_links))


def derive_proposals(backlogs: BacklogView, forecasts: ForecastView, t: Topology,
                     nfilter: NeighborFilter, commodities: CommoditySpace | None = None,
                     alarm_level: float = 0.0, usable_links: set[str] | None = None) -> list[RuleProposal]:
    """Shared core of the rule derivations (forecast-aware argmax per link).

    Emits at most one commodity per link slot per budget round and at most one
    link per commodity per node. Wired links have fixed nominal capacity, so
    no rate selection happens here; parallel links to the same neighbor are
    re-paired afterwards by capacity.
    """
    if commodities is None:
        commodities = build_commodities(t, AS_LEVEL)
    slots = _outgoing_slots(t, usable_links)
    u = backlogs.u
    g = forecasts.g
    proposals: list[RuleProposal] = []

    for n in sorted(t.ases):
        links = slots[n]
        if not links:
            continue
        budget = _rule_budget(commodities, len(links))
        # commodities with meaningful local backlog at this node
        local = [c for c in commodities.ids
                 if commodities.host[c] != n and u.get((n, c), 0.0) >= max(alarm_level, 1e-12)]
        if not local:
            continue
        # every admissible (commodity, link) pairing with its forecast-adjusted
        # differential; greedy assignment by descending differential realizes
        # the best-neighbor selection under the one-link-per-commodity and
        # per-link budget constraints
        candidates: list[tuple[float, str, str, int, float]] = []
        for idx, slot in enumerate(links):
            for c in local:
                if slot.to_as not in nfilter.allowed(n, c):
                    continue
                un = u.get((n, c), 0.0)
                ud = u.get((slot.to_as, c), 0.0)
                if un - ud <= 0.0:
                    continue
                candidates.append((un - ud - g.get((slot.to_as, c), 0.0),
                                   c, slot.link_id, idx, un - ud))
        candidates.sort(key=lambda item: (-item[0], item[1], item[2]))
        assigned: set[str] = set()
        slots_used: dict[int, int] = {}
        chosen: list[tuple[LinkSlot, str, float, float]] = []
        for delta, c, _lid, idx, potential in candidates:
            if c in assigned or slots_used.get(idx, 0) >= budget:
                continue
            assigned.add(c)
            slots_used[idx] = slots_used.get(idx, 0) + 1
            chosen.append((links[idx], c, potential, delta))
        proposals.extend(_reorder_parallel(n, chosen))
    proposals = _prune_disordered_chains(proposals, u, g)
    proposals.sort(key=RuleProposal.sort_key)
    return proposals


def _prune_disordered_chains(proposals, u, g):
    """Drop rules that feed a surviving downstream rule without strictly
    decreasing backlog-plus-forecast, so consecutive decisions stay ordered.

    Successors strictly decrease the plain backlog, so the per-commodity rule
    graph is acyclic and a downstream-first resolution is exact.
    """
    by_key = {(p.owner_as, p.commodity): p for p in proposals}
    kept: dict[tuple[str, str], bool] = {}

    def keep(p) -> bool:
        key = (p.owner_as, p.commodity)
        if key in kept:
            return kept[key]
        succ = by_key.get((p.to_as, p.commodity))
        ok = True
        if succ is not None and keep(succ):
            head = u.get((p.owner_as, p.commodity), 0.0) + g.get((p.owner_as, p.commodity), 0.0)
            tail = u.get((p.to_as, p.commodity), 0.0) + g.get((p.to_as, p.commodity), 0.0)
            ok = head > tail
        kept[key] = ok
        return ok

    return [p for p in proposals if keep(p)]


def _reorder_parallel(owner: str, chosen: list[tuple[LinkSlot, str, float, float]]) -> list[RuleProposal]:
    """Re-pair commodities with parallel links toward the same neighbor AS."""
    by_peer: dict[str, list[tuple[LinkSlot, str, float, float]]] = {}
    for item in chosen:
        by_peer.setdefault(item[0].to_as, []).append(item)
    out = []
    for peer in sorted(by_peer):
        group = by_peer[peer]
        if len(group) <= 1 or len({it[0].link_id for it in group}) <= 1:
            for slot, c, pot, delta in group:
                out.append(RuleProposal(owner, c, slot.link_id, pot, delta, to_as=peer))
            continue
        caps = [it[0].capacity_bps for it in group]
        pairs = [(it[1], it[2]) for it in group]  # reorder on the plain differential
        order = multi_link_reorder(caps, pairs)
        for idx, (slot, _, _, _) in enumerate(group):
            c = order[idx]
            src = next(it for it in group if it[1] == c)
            out.append(RuleProposal(owner, c, slot.link_id, src[2], src[3], to_as=peer))
    return out


def multi_link_reorder(multi_link: list[float], assignments: list[tuple[str, float]]) -> list[str]:
    """Pair commodities with parallel-link capacities maximizing sum(capacity * differential).

    Exhaustive permutation search up to 8 links; beyond that a sorted greedy
    pairing (largest differential on the largest capacity) with a logged
    notice. Score ties resolve to the first permutation in enumeration order.
    """
    if len(multi_link) != len(assignments):
        raise ValueError("one assignment per link required")
    n = len(multi_link)
    if n == 1:
        return [assignments[0][0]]
    if n > EXHAUSTIVE_REORDER_LIMIT:
        logger.info("multi-link width %d exceeds exhaustive bound; using greedy pairing", n)
        link_order = sorted(range(n), key=lambda i: (-multi_link[i], i))
        load_order = sorted(range(n), key=lambda j: (-assignments[j][1], assignments[j][0]))
        result = [""] * n
        for li, aj in zip(link_order, load_order):
            result[li] = assignments[aj][0]
        return result
    best_score, best_perm = -math.inf, None
    for perm in itertools.permutations(range(n)):
        score = sum(multi_link[i] * assignments[perm[i]][1] for i in range(n))
        if score > best_score:
            best_score, best_perm = score, perm
    return [assignments[best_perm[i]][0] for i in range(n)]


def sbpr(backlogs: BacklogView, t: Topology, nfilter: NeighborFilter | None = None,
         commodities: CommoditySpace | None = None, alarm_level: float = 0.0,
         usable_links: set[str] | None = None) -> list[RuleProposal]:
    """Plain backpressure: offload each commodity to the least-loaded allowed neighbor."""
    if nfilter is None:
        nfilter = peering_filter(t, commodities=commodities)
    return derive_proposals(backlogs, ForecastView.zero(), t, nfilter, commodities,
                            alarm_level, usable_links)


def fbpr(backlogs: BacklogView, forecasts: ForecastView, t: Topology,
         nfilter: NeighborFilter | None = None, commodities: CommoditySpace | None = None,
         alarm_level: float = 0.0, usable_links: set[str] | None = None) -> list[RuleProposal]:
    """Foresight-aware backpressure: the differential also charges the
    recipient's expected locally generated traffic. With all forecasts zero
    this is exactly sbpr."""
    if nfilter is None:
        nfilter = peering_filter(t, commodities=commodities)
    return derive_proposals(backlogs, forecasts, t, nfilter, commodities,
                            alarm_level, usable_links)


@dataclass(frozen=True)
class StitchResult:
    proposals: tuple[RuleProposal, ...]
    partial: bool = False
    iterations: int = 1


def _scratch_view(dvr: RoutingTable, commodities: CommoditySpace) -> PolicyView:
    return PolicyView(dvr=dvr, hosts=dict(commodities.host))


def bp_dv_stitch(backlogs: BacklogView, forecasts: ForecastView, t: Topology,
                 dvr: RoutingTable, timeout: float = 5.0,
                 nfilter: NeighborFilter | None = None,
                 commodities: CommoditySpace | None = None, alarm_level: float = 0.0,
                 usable_links: set[str] | None = None, sbpr_core: bool = False) -> StitchResult:
    """Exploratory stitching: rerun the derivation, excluding any neighbor whose
    rule would close a loop against the underlay, until the set is loop-free.

    Proposals are admitted one at a time in ascending start-point order; each
    admission is checked against the policy as stitched so far, so the
    accumulated set is loop-free at every moment. On timeout that accumulated
    subset is returned, flagged partial.
    """
    if timeout <= 0:
        raise ValueError("timeout must be positive")
    if commodities is None:
        commodities = build_commodities(t, AS_LEVEL)
    if nfilter is None:
        nfilter = peering_filter(t, commodities=commodities)
    working = nfilter.copy()
    fview = ForecastView.zero() if sbpr_core else forecasts
    deadline = time.monotonic() + timeout
    max_iter = 1 + sum(len(v) for v in t.as_adjacency().values()) * max(1, len(commodities.ids))

    accepted: list[RuleProposal] = []
    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        accepted = []
        view = _scratch_view(dvr, commodities)
        loop_found = False
        proposals = derive_proposals(backlogs, fview, t, working, commodities,
                                     alarm_level, usable_links)
        for p in proposals:
            if loop_on_insert(view, p.owner_as, p.to_as, p.commodity):
                working.without(p.owner_as, p.commodity, p.to_as)
                loop_found = True
                continue
            view.rules[(p.owner_as, p.commodity)] = p.to_as
            accepted.append(p)
        if not loop_found:
            return StitchResult(tuple(accepted), partial=False, iterations=iterations)
        if time.monotonic() > deadline:
            return StitchResult(tuple(accepted), partial=True, iterations=iterations)
    return StitchResult(tuple(accepted), partial=True, iterations=iterations)


def nhops_stitch(backlogs: BacklogView, forecasts: ForecastView, t: Topology,
                 dvr: RoutingTable, deny: dict[str, set[str]] | None = None,
                 commodities: CommoditySpace | None = None, alarm_level: float = 0.0,
                 usable_links: set[str] | None = None, sbpr_core: bool = False) -> list[RuleProposal]:
    """Restrained stitching: only offload toward neighbors strictly closer to
    the destination. Every step of the combined policy then shrinks the hop
    count, so no loop check is needed, even under partial deployment."""
    if commodities is None:
        commodities = build_commodities(t, AS_LEVEL)
    nf = nhops_filter(t, dvr, deny=deny, commodities=commodities)
    fview = ForecastView.zero() if sbpr_core else forecasts
    return derive_proposals(backlogs, fview, t, nf, commodities, alarm_level, usable_links)


def aggregate_backlog(backlogs: BacklogView, as_id: str, wire, commodities: CommoditySpace) -> float:
    """Backlog toward a prefix, summing any sub-prefixes the AS tracks within it.

    Lets a node compare a coarse super-prefix against a neighbor that manages
    the same address space as several finer prefixes.
    """
    total = 0.0
    span = 32 - wire.mask
    lo = wire.ip >> span << span
    hi = lo + (1 << span) - 1
    for c in commodities.ids:
        rec = commodities.wire[c]
        if rec.mask >= wire.mask and lo <= rec.ip <= hi:
            total += backlogs.get(as_id, c)
    return total


def dump_proposals(proposals, path) -> None:
    """Debug CSV: owner_as,commodity,via_link,potential_bytes."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["owner_as", "commodity", "via_link", "potential_bytes"])
        for p in sorted(proposals, key=RuleProposal.sort_key):
            w.writerow([p.owner_as, p.commodity, p.via_link, f"{p.potential_bytes:.0f}"])
