#!/usr/bin/env python3
"""Regenerate the synthetic topology fixtures under fixtures/.

Two fixture sets are produced deterministically:

* europe25: continental scale, 25 ASes in 66 peer-to-peer relations realized
  by 351 routers and 273 physical peering links.
* desk10:   a hand-shaped 10-AS cluster (25 routers) small enough for
  minute-scale experiment sweeps, with parallel links between the hubs and
  enough path diversity for detour rules to matter.

Router coordinates are city-level: routers of one AS share their city's
coordinates, so intra-AS propagation is zero.
"""

from __future__ import annotations

import random
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]

CITIES = [
    ("Zurich", "CH", 47.38, 8.54), ("Frankfurt", "DE", 50.11, 8.68),
    ("Paris", "FR", 48.85, 2.35), ("Amsterdam", "NL", 52.37, 4.90),
    ("Vienna", "AT", 48.21, 16.37), ("Milan", "IT", 45.46, 9.19),
    ("Madrid", "ES", 40.42, -3.70), ("Stockholm", "SE", 59.33, 18.06),
    ("Warsaw", "PL", 52.23, 21.01), ("Athens", "GR", 37.98, 23.73),
    ("London", "GB", 51.51, -0.13), ("Brussels", "BE", 50.85, 4.35),
    ("Copenhagen", "DK", 55.68, 12.57), ("Oslo", "NO", 59.91, 10.75),
    ("Helsinki", "FI", 60.17, 24.94), ("Lisbon", "PT", 38.72, -9.14),
    ("Rome", "IT", 41.90, 12.50), ("Prague", "CZ", 50.08, 14.44),
    ("Budapest", "HU", 47.50, 19.04), ("Dublin", "IE", 53.35, -6.26),
    ("Geneva", "CH", 46.20, 6.14), ("Munich", "DE", 48.14, 11.58),
    ("Barcelona", "ES", 41.39, 2.17), ("Lyon", "FR", 45.76, 4.84),
    ("Hamburg", "DE", 53.55, 9.99),
]


def write_fixture(out_dir: Path, ases, routers, links) -> None:
    """ases: [(as_id, name, country)], routers: [(rid, as_id, lat, lon)],
    links: [(link_id, from, to)] directed."""
    out_dir.mkdir(parents=True, exist_ok=True)
    as_of = {rid: a for rid, a, _, _ in routers}
    with open(out_dir / "nodes.csv", "w", encoding="utf-8") as fh:
        fh.write("# router_id,lat,lon\n")
        for rid, _, lat, lon in routers:
            fh.write(f"{rid},{lat},{lon}\n")
    with open(out_dir / "as.csv", "w", encoding="utf-8") as fh:
        fh.write("# router_id,as_id,as_name,country\n")
        meta = {a: (n, c) for a, n, c in ases}
        for rid, a, _, _ in routers:
            name, country = meta[a]
            fh.write(f"{rid},{a},{name},{country}\n")
    with open(out_dir / "links.csv", "w", encoding="utf-8") as fh:
        fh.write("# link_id,from_router,to_router  (one directed link per line)\n")
        for lid, frm, to in links:
            assert as_of[frm] != as_of[to], "fixture links must be peering links"
            fh.write(f"{lid},{frm},{to}\n")


def directed_pair(idx: int, r1: str, r2: str):
    return [(f"L{idx:04d}a", r1, r2), (f"L{idx:04d}b", r2, r1)]


# -- desk10 -------------------------------------------------------------

DESK_ASES = [
    ("AS01", "CoreWest", "CH", 5), ("AS02", "CoreEast", "DE", 5),
    ("AS03", "RelayNW", "FR", 3), ("AS04", "RelayNE", "PL", 3),
    ("AS05", "RelaySE", "AT", 3), ("AS06", "RelaySW", "IT", 3),
    ("AS07", "EdgeWest", "ES", 2), ("AS08", "EdgeNorth", "SE", 2),
    ("AS09", "EdgeEast", "GR", 2), ("AS10", "EdgeSouth", "PT", 2),
]

# two popular cores behind a ring of relays: every edge AS reaches either
# core over two distinct relays, so detour rules always have an alternative
DESK_EDGES = [
    ("AS01", "AS02", 2),
    ("AS01", "AS03", 2), ("AS01", "AS04", 2), ("AS01", "AS05", 2), ("AS01", "AS06", 2),
    ("AS02", "AS03", 2), ("AS02", "AS04", 2), ("AS02", "AS05", 2), ("AS02", "AS06", 2),
    ("AS03", "AS07", 1), ("AS03", "AS08", 1),
    ("AS04", "AS08", 1), ("AS04", "AS09", 1),
    ("AS05", "AS09", 1), ("AS05", "AS10", 1),
    ("AS06", "AS10", 1), ("AS06", "AS07", 1),
]


def make_desk10() -> None:
    ases = [(a, name, cc) for a, name, cc, _ in DESK_ASES]
    routers = []
    members: dict[str, list[str]] = {}
    for i, (a, _, _, n) in enumerate(DESK_ASES):
        _, _, lat, lon = CITIES[i]
        members[a] = []
        for k in range(n):
            rid = f"{a}r{k}"
            members[a].append(rid)
            routers.append((rid, a, lat, lon))
    links = []
    idx = 0
    for a, b, count in DESK_EDGES:
        for k in range(count):
            r1 = members[a][k % len(members[a])]
            r2 = members[b][k % len(members[b])]
            links.extend(directed_pair(idx, r1, r2))
            idx += 1
    write_fixture(ROOT / "fixtures" / "desk10", ases, routers, links)
    print(f"desk10: {len(ases)} ASes, {len(routers)} routers, "
          f"{len(links) // 2} physical peering links, {len(DESK_EDGES)} AS relations")


# -- europe25 -----------------------------------------------------------

N_AS = 25
N_EDGES = 66
N_ROUTERS = 351
N_PHYSICAL = 273


def make_europe25() -> None:
    rng = random.Random(1905)
    as_ids = [f"EU{i:02d}" for i in range(N_AS)]
    ases = [(as_ids[i], CITIES[i][0] + "Net", CITIES[i][1]) for i in range(N_AS)]

    edges = set()
    for i in range(N_AS):  # ring keeps everything connected
        edges.add(frozenset((as_ids[i], as_ids[(i + 1) % N_AS])))
    weights = {a: N_AS - i for i, a in enumerate(as_ids)}  # low index = popular
    ordered = list(as_ids)
    while len(edges) < N_EDGES:
        a, b = rng.choices(ordered, weights=[weights[x] for x in ordered], k=2)
        if a != b:
            edges.add(frozenset((a, b)))
    edge_list = sorted(tuple(sorted(e)) for e in edges)

    degree = {a: 0 for a in as_ids}
    for a, b in edge_list:
        degree[a] += 1
        degree[b] += 1

    # routers proportional to degree, largest remainder, 6 per AS minimum
    base = 6
    extra_total = N_ROUTERS - base * N_AS
    total_deg = sum(degree.values())
    quotas = {a: extra_total * degree[a] / total_deg for a in as_ids}
    extras = {a: int(quotas[a]) for a in as_ids}
    remainder = extra_total - sum(extras.values())
    for a in sorted(as_ids, key=lambda x: (quotas[x] - int(quotas[x]), x), reverse=True)[:remainder]:
        extras[a] += 1
    routers = []
    members: dict[str, list[str]] = {}
    for i, a in enumerate(as_ids):
        _, _, lat, lon = CITIES[i]
        members[a] = []
        for k in range(base + extras[a]):
            rid = f"{a}r{k:02d}"
            members[a].append(rid)
            routers.append((rid, a, lat, lon))
    assert len(routers) == N_ROUTERS, len(routers)

    # physical links per AS relation: evenly, remainder to the best-connected pairs
    per_edge = {e: N_PHYSICAL // N_EDGES for e in edge_list}
    leftover = N_PHYSICAL - sum(per_edge.values())
    ranked = sorted(edge_list, key=lambda e: (-(degree[e[0]] + degree[e[1]]), e))
    for e in ranked[:leftover]:
        per_edge[e] += 1
    links = []
    idx = 0
    for a, b in edge_list:
        for k in range(per_edge[(a, b)]):
            r1 = members[a][k % len(members[a])]
            r2 = members[b][(k // len(members[a]) + k) % len(members[b])]
            links.extend(directed_pair(idx, r1, r2))
            idx += 1
    assert idx == N_PHYSICAL, idx
    physical = {frozenset((frm, to)) for _, frm, to in links}
    assert len(physical) == N_PHYSICAL, f"router-pair collision: {len(physical)}"
    write_fixture(ROOT / "fixtures" / "europe25", ases, routers, links)
    print(f"europe25: {len(ases)} ASes, {len(edge_list)} AS relations, "
          f"{len(routers)} routers, {len(physical)} physical peering links")


if __name__ == "__main__":
    make_desk10()
    make_europe25()
    sys.exit(0)
