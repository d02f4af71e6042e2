import json
from pathlib import Path

import pytest
import yaml

from bpte import cli

REPO = Path(__file__).resolve().parents[1]


def write_plan(tmp_path, **overrides):
    plan = {
        "sweep": "load",
        "points": [0.4e9],
        "algorithms": ["dvr_only"],
        "seeds": [1],
        "repetitions": 1,
        "fixture_dir": str(REPO / "fixtures" / "desk10"),
        "duration_s": 120.0,
        "period_s": 10.0,
        "capacity_low_bps": 1.25e9,
        "capacity_high_bps": 3.75e9,
        "output_dir": str(tmp_path / "out"),
    }
    plan.update(overrides)
    p = tmp_path / "plan.yaml"
    p.write_text(yaml.safe_dump(plan), encoding="utf-8")
    return p


def read_rows(path):
    lines = path.read_text().strip().splitlines()
    return lines[0], lines[1:]


def test_single_run_plan(tmp_path):
    plan_file = write_plan(tmp_path)
    rc = cli.main(["--plan", str(plan_file), "--workers", "1"])
    assert rc == 0
    header, rows = read_rows(tmp_path / "out" / "metrics.csv")
    assert header == cli.METRICS_HEADER
    assert len(rows) == 1
    assert rows[0].startswith("load-400000000-dvr_only-s1,dvr_only,none,")
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["errors"] == {}


def test_row_count_is_exact_product(tmp_path):
    plan_file = write_plan(tmp_path, points=[0.3e9, 0.5e9],
                           algorithms=["dvr_only", "fbpr+nhops"],
                           seeds=[1, 2], repetitions=2, duration_s=100.0)
    rc = cli.main(["--plan", str(plan_file), "--workers", "2"])
    assert rc == 0
    _, rows = read_rows(tmp_path / "out" / "metrics.csv")
    assert len(rows) == 2 * 2 * 2
    _, share_rows = read_rows(tmp_path / "out" / "shares.csv")
    n_ases = 10
    assert len(share_rows) == 2 * 2 * n_ases  # one bpr algorithm x points x seeds x ASes


def test_unknown_algorithm_exits_2_no_outputs(tmp_path):
    plan_file = write_plan(tmp_path, algorithms=["ospf"])
    rc = cli.main(["--plan", str(plan_file)])
    assert rc == 2
    assert not (tmp_path / "out").exists()


def test_seed_repetition_mismatch_rejected(tmp_path):
    plan_file = write_plan(tmp_path, seeds=[1, 2], repetitions=3)
    rc = cli.main(["--plan", str(plan_file)])
    assert rc == 2


def test_t_sweep_duration_validated(tmp_path):
    plan_file = write_plan(tmp_path, sweep="period_T", points=[10.0, 60.0],
                           duration_s=120.0)
    rc = cli.main(["--plan", str(plan_file)])
    assert rc == 2  # 120 s cannot cover ten periods of T=60


def test_rerun_byte_identical(tmp_path):
    plan_file = write_plan(tmp_path, points=[0.4e9],
                           algorithms=["dvr_only", "fbpr+nhops"], duration_s=100.0)
    assert cli.main(["--plan", str(plan_file), "--workers", "1"]) == 0
    first = (tmp_path / "out" / "metrics.csv").read_bytes()
    first_shares = (tmp_path / "out" / "shares.csv").read_bytes()
    assert cli.main(["--plan", str(plan_file), "--workers", "2"]) == 0
    assert (tmp_path / "out" / "metrics.csv").read_bytes() == first
    assert (tmp_path / "out" / "shares.csv").read_bytes() == first_shares


def test_summary_stats_structure(tmp_path):
    plan_file = write_plan(tmp_path, points=[0.4e9],
                           algorithms=["dvr_only"], seeds=[1, 2], repetitions=2,
                           duration_s=100.0)
    assert cli.main(["--plan", str(plan_file), "--workers", "2"]) == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    entry = summary["points"][0]
    stats = entry["metrics"]["throughput_bps"]
    assert stats["min"] <= stats["mean"] <= stats["max"]
    assert entry["n_runs"] == 2


def test_distribution_sweep_points(tmp_path):
    plan_file = write_plan(tmp_path, sweep="distribution",
                           points=["linear", "skewed:AS03"], duration_s=100.0)
    rc = cli.main(["--plan", str(plan_file), "--workers", "2"])
    assert rc == 0
    _, rows = read_rows(tmp_path / "out" / "metrics.csv")
    assert len(rows) == 2


def test_prefix_sweep_sets_granularity(tmp_path):
    plan_file = write_plan(tmp_path, sweep="prefixes", points=[1, 5], duration_s=100.0)
    specs = cli.expand_plan(cli.load_plan(plan_file))
    assert {s.scenario.prefixes_per_as for s in specs} == {1, 5}
    assert all(s.scenario.granularity == "prefix_level" for s in specs)
    rc = cli.main(["--plan", str(plan_file), "--workers", "2"])
    assert rc == 0
    _, rows = read_rows(tmp_path / "out" / "metrics.csv")
    assert [r.split(",")[6] for r in rows] == ["1", "5"]


def test_topology_size_sweep(tmp_path):
    plan_file = write_plan(tmp_path, sweep="topology_size", points=[5, 10],
                           duration_s=100.0)
    rc = cli.main(["--plan", str(plan_file), "--workers", "2"])
    assert rc == 0
    _, rows = read_rows(tmp_path / "out" / "metrics.csv")
    assert [r.split(",")[5] for r in rows] == ["5", "10"]


def test_preset_supplies_defaults(tmp_path):
    plan = {"sweep": "load", "points": [0.4e9], "algorithms": ["dvr_only"],
            "seeds": [1], "output_dir": str(tmp_path / "out")}
    p = tmp_path / "plan.yaml"
    p.write_text(yaml.safe_dump(plan), encoding="utf-8")
    loaded = cli.load_plan(p, preset="desk")
    assert loaded.duration_s == 600.0
    assert Path(loaded.fixture_dir).name == "desk10"
    paper = cli.load_plan(p, preset="paper")
    assert paper.duration_s == 3600.0
    assert Path(paper.fixture_dir).name == "europe25"


def test_missing_plan_is_error(tmp_path):
    rc = cli.main(["--plan", str(tmp_path / "nope.yaml")])
    assert rc == 2
