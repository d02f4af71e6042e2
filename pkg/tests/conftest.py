import sys
from pathlib import Path

import pytest

REPO = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO / "scripts"))

from bpte import topology as topo


@pytest.fixture(scope="session")
def fixture_dir() -> Path:
    return REPO / "fixtures"


@pytest.fixture(scope="session")
def desk10(fixture_dir) -> topo.Topology:
    d = fixture_dir / "desk10"
    return topo.load_topology(d / "nodes.csv", d / "links.csv", d / "as.csv")


@pytest.fixture(scope="session")
def europe25(fixture_dir) -> topo.Topology:
    d = fixture_dir / "europe25"
    return topo.load_topology(d / "nodes.csv", d / "links.csv", d / "as.csv")


def write_tiny_fixture(tmp_path: Path, nodes: str, links: str, ases: str):
    """Three fixture files from inline text; returns their paths."""
    n, l, a = tmp_path / "nodes.csv", tmp_path / "links.csv", tmp_path / "as.csv"
    n.write_text(nodes, encoding="utf-8")
    l.write_text(links, encoding="utf-8")
    a.write_text(ases, encoding="utf-8")
    return n, l, a


TINY_NODES = """# router_id,lat,lon
a1,47.0,8.0
a2,47.0,8.0
b1,50.0,9.0
"""

TINY_LINKS = """# link_id,from,to
p1,a1,b1
p2,b1,a1
"""

TINY_AS = """# router_id,as_id,name,country
a1,A,AlphaNet,CH
a2,A,AlphaNet,CH
b1,B,BetaNet,DE
"""


@pytest.fixture()
def tiny(tmp_path) -> topo.Topology:
    files = write_tiny_fixture(tmp_path, TINY_NODES, TINY_LINKS, TINY_AS)
    return topo.load_topology(*files)


def line_topology(tmp_path, n=3, capacity=10e9):
    """A,B,C,... in a line; one router per AS; bidirectional peering links."""
    names = [chr(ord("A") + i) for i in range(n)]
    nodes = "".join(f"{c.lower()}1,45.0,{8.0 + i}\n" for i, c in enumerate(names))
    links = ""
    for i in range(n - 1):
        a, b = names[i].lower(), names[i + 1].lower()
        links += f"l{i}f,{a}1,{b}1,{capacity}\n"
        links += f"l{i}r,{b}1,{a}1,{capacity}\n"
    ases = "".join(f"{c.lower()}1,{c},{c}Net,XX\n" for c in names)
    return topo.load_topology(*write_tiny_fixture(tmp_path, nodes, links, ases))
