import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bpte import topology as topo

from conftest import TINY_AS, TINY_LINKS, TINY_NODES, write_tiny_fixture


def test_tiny_fixture_loads(tiny):
    assert len(tiny.ases) == 2
    assert len(tiny.routers) == 3
    # internal full mesh inside AS A (two routers, both directions)
    internal = [l for l in tiny.links.values() if l.kind == "internal"]
    assert {(l.from_router, l.to_router) for l in internal} == {("a1", "a2"), ("a2", "a1")}
    topo.validate(tiny)


def test_paper_scale_fixture_counts(europe25):
    assert len(europe25.ases) == 25
    assert len(europe25.peering_pairs()) == 66
    assert len(europe25.routers) == 351
    assert europe25.physical_peering_count() == 273


def test_unknown_router_in_link_is_integrity_error(tmp_path):
    files = write_tiny_fixture(tmp_path, TINY_NODES, "p1,a1,zz9\n", TINY_AS)
    with pytest.raises(topo.TopologyIntegrityError):
        topo.load_topology(*files)


def test_malformed_line_names_line_number(tmp_path):
    nodes = "# comment\na1,47.0\n"
    files = write_tiny_fixture(tmp_path, nodes, TINY_LINKS, TINY_AS)
    with pytest.raises(topo.TopologyParseError, match=":2"):
        topo.load_topology(*files)


def test_unassigned_router_dropped_with_count(tmp_path):
    nodes = TINY_NODES + "c9,40.0,5.0\n"
    files = write_tiny_fixture(tmp_path, nodes, TINY_LINKS, TINY_AS)
    t = topo.load_topology(*files)
    assert t.dropped_routers == 1
    assert "c9" not in t.routers


def test_filter_identity_when_topk_covers_all(europe25):
    out = topo.filter_pipeline(europe25, 25)
    assert set(out.ases) == set(europe25.ases)


def test_filter_by_degree_with_tiebreak(tmp_path):
    # degrees A:2 (B,C), B:2 (A,C), C:2 -- triangle; tie broken by id
    nodes = "a1,45,8\nb1,45,9\nc1,45,10\n"
    links = "l1,a1,b1\nl2,b1,a1\nl3,b1,c1\nl4,c1,b1\nl5,a1,c1\nl6,c1,a1\n"
    ases = "a1,A,An,XX\nb1,B,Bn,XX\nc1,C,Cn,XX\n"
    t = topo.load_topology(*write_tiny_fixture(tmp_path, nodes, links, ases))
    out = topo.filter_pipeline(t, 2)
    assert set(out.ases) == {"A", "B"}


def test_filter_sorts_by_degree(tmp_path):
    # star around A plus B-C: degrees A:3, B:2, C:2, D:1
    nodes = "a1,45,8\nb1,45,9\nc1,45,10\nd1,45,11\n"
    links = ("l1,a1,b1\nl2,b1,a1\nl3,a1,c1\nl4,c1,a1\nl5,a1,d1\nl6,d1,a1\n"
             "l7,b1,c1\nl8,c1,b1\n")
    ases = "a1,A,An,XX\nb1,B,Bn,XX\nc1,C,Cn,XX\nd1,D,Dn,XX\n"
    t = topo.load_topology(*write_tiny_fixture(tmp_path, nodes, links, ases))
    assert {a: n.degree for a, n in t.ases.items()} == {"A": 3, "B": 2, "C": 2, "D": 1}
    out = topo.filter_pipeline(t, 2)
    assert set(out.ases) == {"A", "B"}
    out3 = topo.filter_pipeline(t, 3)
    assert set(out3.ases) == {"A", "B", "C"}


def test_filter_topk_beyond_count_keeps_all(tiny):
    assert set(topo.filter_pipeline(tiny, 99).ases) == {"A", "B"}


def test_filter_idempotent(europe25):
    once = topo.filter_pipeline(europe25, 10)
    twice = topo.filter_pipeline(once, 10)
    assert set(once.ases) == set(twice.ases)
    assert set(once.links) == set(twice.links)
    assert {a: n.degree for a, n in once.ases.items()} == \
           {a: n.degree for a, n in twice.ases.items()}


def test_latency_colocated_zero():
    assert topo.link_latency((47.0, 8.0), (47.0, 8.0)) == 0.0


def test_latency_hand_computed_values():
    # pick two points separated by a known arc: 300 km along a meridian
    # 300,000 m / 3e8 m/s  ->  1.0 ms
    lat_delta = math.degrees(300_000.0 / topo.EARTH_RADIUS_M)
    lat = 10.0
    d = topo.haversine_m((lat, 20.0), (lat + lat_delta, 20.0))
    assert d == pytest.approx(300_000.0, rel=1e-9)
    assert topo.link_latency((lat, 20.0), (lat + lat_delta, 20.0)) == pytest.approx(1.0e-3, rel=1e-9)
    # 150 km -> 0.5 ms
    lat_delta = math.degrees(150_000.0 / topo.EARTH_RADIUS_M)
    assert topo.link_latency((lat, 20.0), (lat + lat_delta, 20.0)) == pytest.approx(5.0e-4, rel=1e-9)


@given(st.tuples(st.floats(-80, 80), st.floats(-179, 179)),
       st.tuples(st.floats(-80, 80), st.floats(-179, 179)),
       st.tuples(st.floats(-80, 80), st.floats(-179, 179)))
@settings(max_examples=60, deadline=None)
def test_latency_symmetric_and_triangle(a, b, c):
    ab = topo.link_latency(a, b)
    assert ab == pytest.approx(topo.link_latency(b, a), abs=1e-15)
    assert ab <= topo.link_latency(a, c) + topo.link_latency(c, b) + 1e-9


def test_degenerate_capacity_range(tiny):
    out = topo.randomize_capacities(tiny, 10e9, 10e9, seed=3)
    for l in out.peering_links():
        assert l.capacity_bps == 10e9


def test_capacity_draws_within_default_range(desk10):
    out = topo.randomize_capacities(desk10, seed=7)
    for l in out.peering_links():
        assert 5e9 <= l.capacity_bps <= 15e9


def test_capacity_same_seed_identical(desk10):
    one = topo.randomize_capacities(desk10, seed=42)
    two = topo.randomize_capacities(desk10, seed=42)
    assert {lid: l.capacity_bps for lid, l in one.links.items()} == \
           {lid: l.capacity_bps for lid, l in two.links.items()}
    three = topo.randomize_capacities(desk10, seed=43)
    assert {l.capacity_bps for l in one.peering_links()} != \
           {l.capacity_bps for l in three.peering_links()}


def test_all_operations_preserve_invariants(europe25):
    topo.validate(europe25)
    filtered = topo.filter_pipeline(europe25, 8)
    topo.validate(filtered)
    randomized = topo.randomize_capacities(filtered, seed=0)
    topo.validate(randomized)
    with_prefixes = topo.assign_prefixes(randomized, 5)
    topo.validate(with_prefixes)
    assert all(len(v) == 5 for v in with_prefixes.prefix_table.values())


def test_internal_mesh_capacity_tracks_max_peering(tmp_path):
    nodes = "a1,45,8\na2,45,8\nb1,45,9\n"
    links = "l1,a1,b1,7e9\nl2,b1,a1,9e9\n"
    ases = "a1,A,An,XX\na2,A,An,XX\nb1,B,Bn,XX\n"
    t = topo.load_topology(*write_tiny_fixture(tmp_path, nodes, links, ases))
    internal = [l for l in t.links.values() if l.kind == "internal"]
    assert all(l.capacity_bps == 7e9 for l in internal)  # A's only peering egress


def test_prefixes_deterministic_and_stable_under_filter(europe25):
    a = topo.assign_prefixes(europe25, 3)
    b = topo.assign_prefixes(topo.filter_pipeline(europe25, 10), 3)
    for as_id in b.prefix_table:
        assert b.prefix_table[as_id] == a.prefix_table[as_id]


def test_commodity_space_as_level(tiny):
    com = topo.build_commodities(tiny, topo.AS_LEVEL)
    assert com.ids == ("A", "B")
    assert com.host == {"A": "A", "B": "B"}


def test_commodity_space_prefix_level(tiny):
    t = topo.assign_prefixes(tiny, 2)
    com = topo.build_commodities(t, topo.PREFIX_LEVEL)
    assert len(com.ids) == 4
    hosts = {com.host[c] for c in com.ids}
    assert hosts == {"A", "B"}
    for c in com.ids:
        assert com.wire[c].mask == 24
