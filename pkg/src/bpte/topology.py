"""Two-level (AS-level / router-level) network graph: loading, filtering, queries.

File formats are line oriented, UTF-8, with ``#`` comment lines:

* node file:  ``router_id,lat,lon``
* link file:  ``link_id,from_router,to_router[,capacity_bps]``  (one directed link per line)
* as file:    ``router_id,as_id,as_name,country``
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass, field, replace

EARTH_RADIUS_M = 6_371_000.0
LIGHT_SPEED_MPS = 3.0e8

DEFAULT_CAPACITY_BPS = 10e9
DEFAULT_CAPACITY_RANGE_BPS = (5e9, 15e9)
DEFAULT_ROUTER_MEMORY_BYTES = 4 * 2**30

KIND_PEERING = "peering"
KIND_INTERNAL = "internal"
KIND_EXTERNAL = "external"


class TopologyParseError(ValueError):
    """Malformed input line; message carries file and line number."""


class TopologyIntegrityError(ValueError):
    """A reference between topology records does not resolve."""


@dataclass(frozen=True)
class AsNode:
    as_id: str
    name: str
    country: str
    router_ids: frozenset[str]
    degree: int


@dataclass(frozen=True)
class Router:
    router_id: str
    as_id: str
    location: tuple[float, float]  # (lat, lon) degrees
    memory_capacity: int = DEFAULT_ROUTER_MEMORY_BYTES


@dataclass(frozen=True)
class Link:
    link_id: str
    from_router: str
    to_router: str
    capacity_bps: float
    latency_s: float
    kind: str


@dataclass(frozen=True)
class PrefixRecord:
    ip: int    # 4-byte address as unsigned int
    mask: int  # 1-byte mask length

    def __str__(self) -> str:
        a, b, c, d = (self.ip >> 24) & 255, (self.ip >> 16) & 255, (self.ip >> 8) & 255, self.ip & 255
        return f"{a}.{b}.{c}.{d}/{self.mask}"


@dataclass(frozen=True)
class Topology:
    ases: dict[str, AsNode]
    routers: dict[str, Router]
    links: dict[str, Link]
    prefix_table: dict[str, tuple[PrefixRecord, ...]] = field(default_factory=dict)
    dropped_routers: int = 0

    def peering_links(self) -> list[Link]:
        return [l for l in self.links.values() if l.kind == KIND_PEERING]

    def as_of_router(self, router_id: str) -> str:
        return self.routers[router_id].as_id

    def as_adjacency(self) -> dict[str, set[str]]:
        """Directed AS-level adjacency over peering links."""
        adj: dict[str, set[str]] = {a: set() for a in self.ases}
        for l in self.links.values():
            if l.kind != KIND_PEERING:
                continue
            a, b = self.as_of_router(l.from_router), self.as_of_router(l.to_router)
            adj[a].add(b)
        return adj

    def peering_pairs(self) -> set[frozenset[str]]:
        """Unordered AS pairs connected by at least one peering link."""
        pairs = set()
        for l in self.links.values():
            if l.kind == KIND_PEERING:
                pairs.add(frozenset((self.as_of_router(l.from_router), self.as_of_router(l.to_router))))
        return pairs

    def physical_peering_count(self) -> int:
        """Distinct unordered router pairs joined by peering links."""
        return len({frozenset((l.from_router, l.to_router)) for l in self.peering_links()})


def _parse_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            yield lineno, line


def haversine_m(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Great-circle distance in meters on a sphere of radius 6371 km."""
    lat1, lon1 = math.radians(a[0]), math.radians(a[1])
    lat2, lon2 = math.radians(b[0]), math.radians(b[1])
    dlat, dlon = lat2 - lat1, lon2 - lon1
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def link_latency(from_location: tuple[float, float], to_location: tuple[float, float]) -> float:
    """Propagation delay: great-circle distance divided by the speed of light."""
    return haversine_m(from_location, to_location) / LIGHT_SPEED_MPS


def _max_peering_capacity(links: dict[str, Link], routers: dict[str, Router], as_id: str) -> float:
    best = 0.0
    for l in links.values():
        if l.kind == KIND_PEERING and routers[l.from_router].as_id == as_id:
            best = max(best, l.capacity_bps)
    return best if best > 0 else DEFAULT_CAPACITY_BPS


def _with_internal_mesh(ases, routers, links) -> dict[str, Link]:
    """Return links plus a regenerated full mesh of internal links per AS.

    Internal capacity is the max peering capacity of the owning AS so that
    intra-AS transit is never the bottleneck.
    """
    out = {lid: l for lid, l in links.items() if l.kind != KIND_INTERNAL}
    for as_id in sorted(ases):
        cap = _max_peering_capacity(out, routers, as_id)
        members = sorted(ases[as_id].router_ids)
        for r1 in members:
            for r2 in members:
                if r1 == r2:
                    continue
                lid = f"int:{r1}>{r2}"
                out[lid] = Link(
                    link_id=lid,
                    from_router=r1,
                    to_router=r2,
                    capacity_bps=cap,
                    latency_s=link_latency(routers[r1].location, routers[r2].location),
                    kind=KIND_INTERNAL,
                )
    return out


def _recompute_degrees(ases, routers, links) -> dict[str, AsNode]:
    peers: dict[str, set[str]] = {a: set() for a in ases}
    for l in links.values():
        if l.kind != KIND_PEERING:
            continue
        a, b = routers[l.from_router].as_id, routers[l.to_router].as_id
        if a != b:
            peers[a].add(b)
            peers[b].add(a)
    return {a: replace(node, degree=len(peers[a])) for a, node in ases.items()}


def load_topology(node_file, link_file, as_assignment_file) -> Topology:
    """Parse the three fixture files into a validated Topology.

    Routers whose AS assignment is missing are dropped (counted in
    ``dropped_routers``); a link endpoint that resolves to no known router is
    an integrity error. Internal full meshes are regenerated per AS.
    """
    locations: dict[str, tuple[float, float]] = {}
    for lineno, line in _parse_lines(node_file):
        parts = line.split(",")
        if len(parts) != 3:
            raise TopologyParseError(f"{node_file}:{lineno}: expected router_id,lat,lon")
        try:
            locations[parts[0]] = (float(parts[1]), float(parts[2]))
        except ValueError as exc:
            raise TopologyParseError(f"{node_file}:{lineno}: bad coordinate ({exc})") from None

    assignment: dict[str, tuple[str, str, str]] = {}
    for lineno, line in _parse_lines(as_assignment_file):
        parts = line.split(",")
        if len(parts) != 4:
            raise TopologyParseError(f"{as_assignment_file}:{lineno}: expected router_id,as_id,as_name,country")
        assignment[parts[0]] = (parts[1], parts[2], parts[3])

    routers: dict[str, Router] = {}
    dropped = 0
    for rid, loc in locations.items():
        if rid not in assignment:
            dropped += 1
            continue
        routers[rid] = Router(router_id=rid, as_id=assignment[rid][0], location=loc)

    as_members: dict[str, set[str]] = {}
    as_meta: dict[str, tuple[str, str]] = {}
    for r in routers.values():
        as_members.setdefault(r.as_id, set()).add(r.router_id)
        as_meta[r.as_id] = (assignment[r.router_id][1], assignment[r.router_id][2])

    ases = {
        a: AsNode(as_id=a, name=as_meta[a][0], country=as_meta[a][1],
                  router_ids=frozenset(members), degree=0)
        for a, members in as_members.items()
    }

    links: dict[str, Link] = {}
    for lineno, line in _parse_lines(link_file):
        parts = line.split(",")
        if len(parts) not in (3, 4):
            raise TopologyParseError(f"{link_file}:{lineno}: expected link_id,from_router,to_router[,capacity_bps]")
        lid, frm, to = parts[0], parts[1], parts[2]
        if frm not in locations or to not in locations:
            raise TopologyIntegrityError(f"{link_file}:{lineno}: link {lid} references unknown router")
        if frm not in routers or to not in routers:
            dropped += 0  # endpoint belonged to a dropped (unassigned) router
            continue
        try:
            cap = float(parts[3]) if len(parts) == 4 else DEFAULT_CAPACITY_BPS
        except ValueError:
            raise TopologyParseError(f"{link_file}:{lineno}: bad capacity") from None
        if cap <= 0:
            raise TopologyParseError(f"{link_file}:{lineno}: capacity must be positive")
        same_as = routers[frm].as_id == routers[to].as_id
        links[lid] = Link(
            link_id=lid,
            from_router=frm,
            to_router=to,
            capacity_bps=cap,
            latency_s=link_latency(routers[frm].location, routers[to].location),
            kind=KIND_INTERNAL if same_as else KIND_PEERING,
        )

    links = _with_internal_mesh(ases, routers, links)
    ases = _recompute_degrees(ases, routers, links)
    topo = Topology(ases=ases, routers=routers, links=links, dropped_routers=dropped)
    validate(topo)
    return topo


def validate(t: Topology) -> None:
    """Check every structural invariant; raise TopologyIntegrityError on failure."""
    for a, node in t.ases.items():
        if not node.router_ids:
            raise TopologyIntegrityError(f"AS {a} has no routers")
        for rid in node.router_ids:
            if rid not in t.routers or t.routers[rid].as_id != a:
                raise TopologyIntegrityError(f"AS {a} membership inconsistent for router {rid}")
    for r in t.routers.values():
        if r.as_id not in t.ases:
            raise TopologyIntegrityError(f"router {r.router_id} owned by unknown AS {r.as_id}")
        if r.memory_capacity <= 0:
            raise TopologyIntegrityError(f"router {r.router_id} memory must be positive")
    internal_present: dict[str, set[tuple[str, str]]] = {a: set() for a in t.ases}
    for l in t.links.values():
        if l.from_router not in t.routers or l.to_router not in t.routers:
            raise TopologyIntegrityError(f"link {l.link_id} has dangling endpoint")
        if l.capacity_bps <= 0 or l.latency_s < 0:
            raise TopologyIntegrityError(f"link {l.link_id} has invalid capacity/latency")
        a, b = t.as_of_router(l.from_router), t.as_of_router(l.to_router)
        if l.kind == KIND_INTERNAL:
            if a != b:
                raise TopologyIntegrityError(f"internal link {l.link_id} crosses ASes")
            internal_present[a].add((l.from_router, l.to_router))
        elif l.kind == KIND_PEERING and a == b:
            raise TopologyIntegrityError(f"peering link {l.link_id} inside one AS")
    adj = {a: set() for a in t.ases}
    for l in t.links.values():
        if l.kind == KIND_PEERING:
            a, b = t.as_of_router(l.from_router), t.as_of_router(l.to_router)
            adj[a].add(b)
            adj[b].add(a)
    for a, node in t.ases.items():
        if node.degree != len(adj[a]):
            raise TopologyIntegrityError(f"AS {a} degree {node.degree} != peer count {len(adj[a])}")
        members = sorted(node.router_ids)
        expected = {(r1, r2) for r1 in members for r2 in members if r1 != r2}
        if expected - internal_present[a]:
            raise TopologyIntegrityError(f"AS {a} internal mesh incomplete")


def filter_pipeline(t: Topology, top_k: int, keep_peer_to_peer_only: bool = True) -> Topology:
    """Keep the top_k ASes by connectivity degree (ties by ascending as_id).

    Only links between retained ASes survive; external-kind links are dropped
    when keep_peer_to_peer_only is set. Internal meshes are regenerated and
    degrees recomputed. top_k beyond the AS count keeps everything.
    """
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    ranked = sorted(t.ases.values(), key=lambda n: (-n.degree, n.as_id))
    keep = {n.as_id for n in ranked[:top_k]}
    routers = {rid: r for rid, r in t.routers.items() if r.as_id in keep}
    links = {}
    for lid, l in t.links.items():
        if l.kind == KIND_INTERNAL:
            continue
        if keep_peer_to_peer_only and l.kind == KIND_EXTERNAL:
            continue
        if l.from_router in routers and l.to_router in routers:
            links[lid] = l
    ases = {
        a: replace(node, router_ids=frozenset(node.router_ids))
        for a, node in t.ases.items() if a in keep
    }
    links = _with_internal_mesh(ases, routers, links)
    ases = _recompute_degrees(ases, routers, links)
    prefixes = {c: p for c, p in t.prefix_table.items() if c in keep}
    out = Topology(ases=ases, routers=routers, links=links, prefix_table=prefixes)
    validate(out)
    return out


def randomize_capacities(t: Topology, low_bps: float = DEFAULT_CAPACITY_RANGE_BPS[0],
                         high_bps: float = DEFAULT_CAPACITY_RANGE_BPS[1], seed: int = 0) -> Topology:
    """Independent uniform capacity draw per peering-link direction.

    Identical seed gives identical draws; internal meshes are refreshed so
    their capacity tracks the new max peering capacity per AS.
    """
    if not (0 < low_bps <= high_bps):
        raise ValueError("need 0 < low_bps <= high_bps")
    rng = random.Random(seed)
    links = {}
    for lid in sorted(t.links):
        l = t.links[lid]
        if l.kind == KIND_PEERING:
            links[lid] = replace(l, capacity_bps=rng.uniform(low_bps, high_bps))
        elif l.kind != KIND_INTERNAL:
            links[lid] = l
    links = _with_internal_mesh(t.ases, t.routers, links)
    out = Topology(ases=t.ases, routers=t.routers, links=links, prefix_table=t.prefix_table)
    validate(out)
    return out


def _as_seed_bits(as_id: str) -> int:
    return int.from_bytes(hashlib.sha256(as_id.encode()).digest()[:2], "big")


def synthetic_prefix(as_id: str, index: int) -> PrefixRecord:
    """Deterministic /24 derived from the as_id alone, stable across filtering."""
    base = _as_seed_bits(as_id)
    ip = (10 << 24) | (base << 8) | 0
    ip = (ip + (index << 8)) & 0xFFFFFFFF
    return PrefixRecord(ip=ip, mask=24)


def assign_prefixes(t: Topology, n_per_as: int) -> Topology:
    """Give every AS n_per_as synthetic hosted prefixes."""
    if n_per_as < 1:
        raise ValueError("n_per_as must be >= 1")
    table = {a: tuple(synthetic_prefix(a, i) for i in range(n_per_as)) for a in sorted(t.ases)}
    return Topology(ases=t.ases, routers=t.routers, links=t.links, prefix_table=table,
                    dropped_routers=t.dropped_routers)


AS_LEVEL = "as_level"
PREFIX_LEVEL = "prefix_level"


@dataclass(frozen=True)
class CommoditySpace:
    """Routing destinations: ASes at AS granularity, hosted prefixes otherwise."""
    kind: str
    ids: tuple[str, ...]
    host: dict[str, str]                    # commodity -> hosting AS
    wire: dict[str, PrefixRecord]           # commodity -> on-the-wire prefix record
    by_as: dict[str, tuple[str, ...]]       # hosting AS -> commodities

    def hosted_by(self, as_id: str) -> tuple[str, ...]:
        return self.by_as.get(as_id, ())


def build_commodities(t: Topology, granularity: str = AS_LEVEL) -> CommoditySpace:
    if granularity == AS_LEVEL:
        ids = tuple(sorted(t.ases))
        host = {a: a for a in ids}
        wire = {a: synthetic_prefix(a, 0) for a in ids}
        by_as = {a: (a,) for a in ids}
        return CommoditySpace(AS_LEVEL, ids, host, wire, by_as)
    if granularity == PREFIX_LEVEL:
        if not t.prefix_table:
            raise ValueError("prefix granularity requires assign_prefixes first")
        host, wire, by_as = {}, {}, {}
        ids = []
        for a in sorted(t.prefix_table):
            coms = []
            for rec in t.prefix_table[a]:
                cid = str(rec)
                ids.append(cid)
                coms.append(cid)
                host[cid] = a
                wire[cid] = rec
            by_as[a] = tuple(coms)
        return CommoditySpace(PREFIX_LEVEL, tuple(ids), host, wire, by_as)
    raise ValueError(f"unknown granularity {granularity!r}")
