import itertools
import random

import pytest

from bpte import policy
from bpte import topology as topo

from conftest import line_topology, write_tiny_fixture


def bfs_hops(adj, src, dst):
    """Reachability oracle: plain breadth-first search over an adjacency dict."""
    from collections import deque
    seen = {src: 0}
    q = deque([src])
    while q:
        cur = q.popleft()
        if cur == dst:
            return seen[cur]
        for nxt in adj[cur]:
            if nxt not in seen:
                seen[nxt] = seen[cur] + 1
                q.append(nxt)
    return None


def test_two_node_single_link(tmp_path):
    t = line_topology(tmp_path, 2)
    table = policy.compute_dvr(t)
    assert table.next_hop[("A", "B")] == "B"
    assert table.hop_count[("A", "B")] == 1
    assert table.hop_count[("B", "B")] == 0


def test_line_graph_next_hop(tmp_path):
    t = line_topology(tmp_path, 3)
    table = policy.compute_dvr(t)
    assert table.next_hop[("A", "C")] == "B"
    assert table.hop_count[("A", "C")] == 2


def test_disconnected_pair_absent(tmp_path):
    nodes = "a1,45,8\nb1,45,9\nc1,45,10\nd1,45,11\n"
    links = "l1,a1,b1\nl2,b1,a1\nl3,c1,d1\nl4,d1,c1\n"
    ases = "a1,A,An,XX\nb1,B,Bn,XX\nc1,C,Cn,XX\nd1,D,Dn,XX\n"
    t = topo.load_topology(*write_tiny_fixture(tmp_path, nodes, links, ases))
    table = policy.compute_dvr(t)
    assert ("A", "C") not in table.next_hop
    assert ("A", "C") not in table.hop_count


def test_dvr_matches_bfs_oracle(desk10):
    table = policy.compute_dvr(desk10)
    adj = {n: sorted(nbrs) for n, nbrs in desk10.as_adjacency().items()}
    for src in adj:
        for dst in adj:
            expect = bfs_hops(adj, src, dst)
            got = table.hop_count.get((src, dst))
            assert got == expect


def test_router_level_dvr(desk10):
    table = policy.compute_dvr(desk10, policy.ROUTER_LEVEL)
    some = next(iter(desk10.routers))
    assert table.hop_count[(some, some)] == 0
    # internal mesh means any two routers of one AS are one hop apart
    a = desk10.ases["AS01"]
    r1, r2 = sorted(a.router_ids)[:2]
    assert table.hop_count[(r1, r2)] == 1


def view_of(t, rules=None):
    table = policy.compute_dvr(t)
    v = policy.view_for(t, table)
    if rules:
        v.rules.update(rules)
    return v


def test_apply_policy_fixed_point(tmp_path):
    v = view_of(line_topology(tmp_path, 2))
    assert policy.apply_policy(v, "B", "B") == "B"


def test_apply_policy_rule_precedence_and_expiry(tmp_path):
    t = line_topology(tmp_path, 4)  # A-B-C-D
    v = view_of(t, {("B", "D"): "A"})  # override away from the shortest path
    assert policy.apply_policy(v, "B", "D") == "A"
    del v.rules[("B", "D")]
    assert policy.apply_policy(v, "B", "D") == "C"


def test_apply_policy_no_route(tmp_path):
    nodes = "a1,45,8\nb1,45,9\nc1,45,10\nd1,45,11\n"
    links = "l1,a1,b1\nl2,b1,a1\nl3,c1,d1\nl4,d1,c1\n"
    ases = "a1,A,An,XX\nb1,B,Bn,XX\nc1,C,Cn,XX\nd1,D,Dn,XX\n"
    t = topo.load_topology(*write_tiny_fixture(tmp_path, nodes, links, ases))
    v = view_of(t)
    assert policy.apply_policy(v, "A", "C") is None
    ts = policy.traverse(v, "A", "C")
    assert ts.no_route and not ts.looped


def test_traverse_host_origin(tmp_path):
    v = view_of(line_topology(tmp_path, 3))
    ts = policy.traverse(v, "C", "C")
    assert ts.visited == ("C",)
    assert ts.terminated_at_fixed_point


def test_traverse_detects_detour_loop(tmp_path):
    # B detours D-bound traffic to A, whose shortest path heads back to B
    t = line_topology(tmp_path, 4)
    v = view_of(t, {("B", "D"): "A"})
    ts = policy.traverse(v, "A", "D")
    assert ts.looped
    assert ts.visited[-1] in ts.visited[:-1]
    assert not ts.terminated_at_fixed_point


def test_pure_dvr_always_reaches_fixed_point(desk10):
    v = view_of(desk10)
    for origin in desk10.ases:
        for dest in desk10.ases:
            ts = policy.traverse(v, origin, dest)
            assert ts.terminated_at_fixed_point
            assert ts.visited[-1] == dest
            assert not ts.looped


def test_hop_count_strictly_decreases_along_dvr(desk10):
    table = policy.compute_dvr(desk10)
    v = policy.view_for(desk10, table)
    for origin in desk10.ases:
        for dest in desk10.ases:
            ts = policy.traverse(v, origin, dest)
            hops = [table.hop_count[(n, dest)] for n in ts.visited]
            assert all(a > b for a, b in zip(hops, hops[1:]))


def test_loop_on_insert_safe_case(tmp_path):
    t = line_topology(tmp_path, 4)  # A-B-C-D
    v = view_of(t)
    # sending A's D-traffic to B matches the shortest path: safe
    assert not policy.loop_on_insert(v, "A", "B", "D")


def test_loop_on_insert_detour_returns_true(tmp_path):
    # the walk from the pathlet end comes back to the start: unsafe
    t = line_topology(tmp_path, 4)
    v = view_of(t)
    assert policy.loop_on_insert(v, "B", "A", "D")


def test_loop_on_insert_chained_rules(tmp_path):
    # with an accepted rule C->B for commodity D, inserting B->C loops even
    # though the distance-vector walk alone would not return
    t = line_topology(tmp_path, 4)
    v = view_of(t, {("C", "D"): "B"})
    assert policy.loop_on_insert(v, "B", "C", "D")
    v2 = view_of(t)
    assert not policy.loop_on_insert(v2, "B", "C", "D")


def random_connected_graph(rng, n):
    nodes = [f"N{i:02d}" for i in range(n)]
    adj = {x: set() for x in nodes}
    for i in range(1, n):
        j = rng.randrange(i)
        adj[nodes[i]].add(nodes[j])
        adj[nodes[j]].add(nodes[i])
    extra = rng.randrange(0, n)
    for _ in range(extra):
        a, b = rng.sample(nodes, 2)
        adj[a].add(b)
        adj[b].add(a)
    return {x: sorted(v) for x, v in adj.items()}


def dvr_from_adj(adj):
    table_next, table_hops = {}, {}
    for dest in sorted(adj):
        for src in sorted(adj):
            h = bfs_hops(adj, src, dest)
            if h is None:
                continue
            table_hops[(src, dest)] = h
            if src != dest:
                for nbr in adj[src]:
                    if bfs_hops(adj, nbr, dest) == h - 1:
                        table_next[(src, dest)] = nbr
                        break
    return policy.RoutingTable(topo.AS_LEVEL, table_next, table_hops)


def test_loop_filter_yields_loop_free_sets():
    # any rule batch admitted through loop_on_insert one at a time leaves a
    # loop-free combined policy, exhaustively over origins on small graphs
    rng = random.Random(7)
    for _ in range(40):
        n = rng.randrange(4, 13)
        adj = random_connected_graph(rng, n)
        table = dvr_from_adj(adj)
        hosts = {x: x for x in adj}
        commodity = rng.choice(sorted(adj))
        v = policy.PolicyView(dvr=table, hosts=hosts)
        for _ in range(n):
            start = rng.choice(sorted(adj))
            if start == commodity:
                continue
            end = rng.choice(adj[start])
            if end == start or (start, commodity) in v.rules:
                continue
            if not policy.loop_on_insert(v, start, end, commodity):
                v.rules[(start, commodity)] = end
        for origin in adj:
            ts = policy.traverse(v, origin, commodity)
            assert not ts.looped


def test_chain_of_run_length_encodes(tmp_path):
    t = line_topology(tmp_path, 5)  # A-B-C-D-E
    v = view_of(t, {("A", "E"): "B"})
    ts = policy.traverse(v, "A", "E")
    chain = policy.chain_of(v, ts, "E")
    assert chain.segments == ((policy.BP, 1), (policy.DV, 3))
    assert all(count >= 1 for _, count in chain.segments)


def test_traversal_dump_csv(tmp_path, desk10):
    v = view_of(desk10)
    out = tmp_path / "trav.csv"
    pairs = list(itertools.product(sorted(desk10.ases)[:3], sorted(desk10.ases)[:3]))
    policy.dump_traversals(v, pairs, out)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "origin,commodity,visited_sequence,loop_flag"
    assert len(lines) == 1 + len(pairs)
