"""Experiment plans: sweep definitions, parallel execution, CSV/JSON emission.

A plan YAML names a sweep kind, its points, the algorithms, and the seeds;
presets supply scenario defaults at two scales. Each (point, algorithm, seed)
run is independent: capacities and traffic derive from the run seed, so
algorithms compared at the same seed see identical conditions.
"""

from __future__ import annotations

import argparse
import json
import multiprocessing
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import engine as engine_mod
from . import topology as topo_mod
from .engine import ALGORITHMS, MetricsReport, Scenario, parse_algorithm

SWEEPS = ("load", "period_T", "distribution", "prefixes", "topology_size")

# desk-scale load axis (bits/second offered per router)
DESK_LOW_LOAD_BPS = 0.4e9
DESK_MEDIUM_LOAD_BPS = 0.75e9
DESK_HIGH_LOAD_BPS = 0.85e9

METRICS_HEADER = ("run_id,algorithm,stitch,T_s,load_bps,n_ases,n_prefixes,seed,"
                  "throughput_bps,overflow_bps,mean_latency_s,overhead_bytes,"
                  "stability_avg_backlog")
SHARES_HEADER = "run_id,as_id,dvr_share,bpr_share"

_REPO_ROOT = Path(__file__).resolve().parents[2]

PRESETS = {
    # full-scale defaults: hour-long runs on the 25-AS fixture
    "paper": {
        "fixture_dir": str(_REPO_ROOT / "fixtures" / "europe25"),
        "top_k": None,
        "duration_s": 3600.0,
        "period_s": 10.0,
        "mean_router_load_bps": 32.0e9,  # 4 GB/s generated per router
        "capacity_low_bps": 5.0e9,
        "capacity_high_bps": 15.0e9,
        "alarm_level_bytes": 2 * 2**30,
        "router_memory_bytes": 4 * 2**30,
        "rate_wander_std": 0.8,
    },
    # desk scale: minutes of wall time on the 10-AS fixture. The whole system
    # is the full-scale setting at one eighth (capacities, loads, memories,
    # alarm), which preserves congestion ratios and queue-drain timescales
    # while keeping batch-event counts small.
    "desk": {
        "fixture_dir": str(_REPO_ROOT / "fixtures" / "desk10"),
        "top_k": None,
        "duration_s": 600.0,
        "period_s": 10.0,
        "mean_router_load_bps": DESK_MEDIUM_LOAD_BPS,
        "capacity_low_bps": 0.625e9,
        "capacity_high_bps": 1.875e9,
        "alarm_level_bytes": 256e6,
        "router_memory_bytes": 2 * 2**30,
        "rate_wander_std": 0.8,
    },
}


class PlanError(ValueError):
    pass


@dataclass
class ExperimentPlan:
    sweep: str
    points: list
    algorithms: list[str]
    seeds: list[int]
    repetitions: int
    output_dir: str
    fixture_dir: str
    top_k: int | None = None
    duration_s: float = 600.0
    period_s: float = 10.0
    mean_router_load_bps: float = 1.0e9
    capacity_low_bps: float = 5.0e9
    capacity_high_bps: float = 15.0e9
    batch_bytes: int = 50 * 2**20
    granularity: str = topo_mod.AS_LEVEL
    prefixes_per_as: int = 1
    traffic_mode: str = "linear"
    input_as: str | None = None
    deny: dict = field(default_factory=dict)
    alarm_level_bytes: float = 0.0
    router_memory_bytes: int = 4 * 2**30
    rate_wander_std: float = 0.0
    rate_wander_rho: float = 0.85

    def validate(self) -> None:
        if self.sweep not in SWEEPS:
            raise PlanError(f"unknown sweep {self.sweep!r}; expected one of {SWEEPS}")
        if not self.points:
            raise PlanError("plan needs at least one sweep point")
        if self.repetitions < 1:
            raise PlanError("repetitions must be >= 1")
        if len(self.seeds) != self.repetitions:
            raise PlanError("seeds list length must equal repetitions")
        for algo in self.algorithms:
            if algo not in ALGORITHMS:
                raise PlanError(f"unknown algorithm {algo!r}; expected one of {ALGORITHMS}")
        if self.sweep == "period_T":
            max_t = max(float(p) for p in self.points)
            if self.duration_s < 10 * max_t:
                raise PlanError("duration must cover ten periods of the largest T")
        for f in ("nodes.csv", "links.csv", "as.csv"):
            if not (Path(self.fixture_dir) / f).exists():
                raise PlanError(f"fixture file missing: {Path(self.fixture_dir) / f}")


def load_plan(path, preset: str | None = None, output_dir: str | None = None) -> ExperimentPlan:
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise PlanError(f"{path}: plan must be a mapping")
    preset_name = preset or raw.get("preset")
    base = dict(PRESETS.get(preset_name, {})) if preset_name else {}
    if preset_name and preset_name not in PRESETS:
        raise PlanError(f"unknown preset {preset_name!r}")

    def pick(key, default=None):
        return raw.get(key, base.get(key, default))

    seeds = [int(s) for s in raw.get("seeds", [0])]
    plan = ExperimentPlan(
        sweep=raw.get("sweep", "load"),
        points=list(raw.get("points", [])),
        algorithms=list(raw.get("algorithms", ["dvr_only"])),
        seeds=seeds,
        repetitions=int(raw.get("repetitions", len(seeds))),
        output_dir=output_dir or raw.get("output_dir", "out"),
        fixture_dir=str(pick("fixture_dir", "")),
        top_k=pick("top_k"),
        duration_s=float(pick("duration_s", 600.0)),
        period_s=float(pick("period_s", 10.0)),
        mean_router_load_bps=float(pick("mean_router_load_bps", 1.0e9)),
        capacity_low_bps=float(pick("capacity_low_bps", 5.0e9)),
        capacity_high_bps=float(pick("capacity_high_bps", 15.0e9)),
        batch_bytes=int(pick("batch_bytes", 50 * 2**20)),
        granularity=str(pick("granularity", topo_mod.AS_LEVEL)),
        prefixes_per_as=int(pick("prefixes_per_as", 1)),
        traffic_mode=str(pick("traffic_mode", "linear")),
        input_as=pick("input_as"),
        deny=dict(pick("deny", {}) or {}),
        alarm_level_bytes=float(pick("alarm_level_bytes", 0.0)),
        router_memory_bytes=int(pick("router_memory_bytes", 4 * 2**30)),
        rate_wander_std=float(pick("rate_wander_std", 0.0)),
        rate_wander_rho=float(pick("rate_wander_rho", 0.85)),
    )
    plan.validate()
    return plan


@dataclass(frozen=True)
class RunSpec:
    run_id: str
    sweep: str
    point: object
    algorithm: str
    seed: int
    fixture_dir: str
    top_k: int | None
    duration_s: float
    period_s: float
    capacity_low_bps: float
    capacity_high_bps: float
    scenario: Scenario


def point_label(point) -> str:
    if isinstance(point, float) and point.is_integer():
        return str(int(point))
    return str(point).replace(":", "_").replace("/", "_")


def expand_plan(plan: ExperimentPlan) -> list[RunSpec]:
    specs = []
    for point in plan.points:
        top_k = plan.top_k
        duration = plan.duration_s
        period = plan.period_s
        load = plan.mean_router_load_bps
        mode, input_as = plan.traffic_mode, plan.input_as
        granularity, n_p = plan.granularity, plan.prefixes_per_as
        if plan.sweep == "load":
            load = float(point)
        elif plan.sweep == "period_T":
            period = float(point)
        elif plan.sweep == "distribution":
            text = str(point)
            if text.startswith("skewed:"):
                mode, input_as = "skewed", text.split(":", 1)[1]
            elif text == "linear":
                mode, input_as = "linear", None
            else:
                raise PlanError(f"distribution point must be 'linear' or 'skewed:<AS>', got {text!r}")
        elif plan.sweep == "prefixes":
            granularity, n_p = topo_mod.PREFIX_LEVEL, int(point)
        elif plan.sweep == "topology_size":
            top_k = int(point)
        # per-prefix backlogs split the per-AS totals, so the congestion alarm
        # threshold scales down with the prefix count
        alarm = plan.alarm_level_bytes / (n_p if granularity == topo_mod.PREFIX_LEVEL else 1)
        for algorithm in plan.algorithms:
            for seed in plan.seeds:
                scenario = Scenario(
                    mode=mode, input_as=input_as, mean_router_load_bps=load,
                    batch_bytes=plan.batch_bytes, granularity=granularity,
                    prefixes_per_as=n_p, deny={k: set(v) for k, v in plan.deny.items()},
                    alarm_level_bytes=alarm,
                    router_memory_bytes=plan.router_memory_bytes,
                    rate_wander_std=plan.rate_wander_std,
                    rate_wander_rho=plan.rate_wander_rho,
                )
                run_id = f"{plan.sweep}-{point_label(point)}-{algorithm}-s{seed}"
                specs.append(RunSpec(run_id=run_id, sweep=plan.sweep, point=point,
                                     algorithm=algorithm, seed=seed,
                                     fixture_dir=plan.fixture_dir, top_k=top_k,
                                     duration_s=duration, period_s=period,
                                     capacity_low_bps=plan.capacity_low_bps,
                                     capacity_high_bps=plan.capacity_high_bps,
                                     scenario=scenario))
    return specs


def build_topology(spec: RunSpec):
    d = Path(spec.fixture_dir)
    t = topo_mod.load_topology(d / "nodes.csv", d / "links.csv", d / "as.csv")
    if spec.top_k is not None:
        t = topo_mod.filter_pipeline(t, spec.top_k)
    t = topo_mod.randomize_capacities(t, spec.capacity_low_bps, spec.capacity_high_bps,
                                      seed=spec.seed)
    return t


def execute_run(spec: RunSpec) -> tuple[RunSpec, MetricsReport]:
    t = build_topology(spec)
    report = engine_mod.run(t, spec.scenario, spec.algorithm,
                            spec.duration_s, spec.period_s, spec.seed)
    return spec, report


def _execute_safe(spec: RunSpec):
    try:
        return execute_run(spec)
    except Exception as exc:  # recorded per run; the plan continues
        return spec, exc


def _fmt(x: float) -> str:
    return format(x, ".10g")


def metrics_row(spec: RunSpec, rep: MetricsReport) -> str:
    variant, stitch = parse_algorithm(spec.algorithm)
    n_p = spec.scenario.prefixes_per_as if spec.scenario.granularity == topo_mod.PREFIX_LEVEL else 0
    n_ases = spec.top_k
    if n_ases is None:
        n_ases = _count_fixture_ases(spec.fixture_dir)
    return ",".join([
        spec.run_id, variant, stitch, _fmt(spec.period_s),
        _fmt(spec.scenario.mean_router_load_bps), str(n_ases), str(n_p), str(spec.seed),
        _fmt(rep.throughput_bps), _fmt(rep.overflow_bps), _fmt(rep.mean_batch_latency_s),
        str(rep.control_overhead_bytes), _fmt(rep.stability_avg_backlog),
    ])


def _count_fixture_ases(fixture_dir) -> int:
    seen = set()
    with open(Path(fixture_dir) / "as.csv", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                seen.add(line.split(",")[1])
    return len(seen)


def run_plan(plan: ExperimentPlan, workers: int = 1) -> int:
    """Execute every run of the plan; write metrics/shares CSVs and a summary JSON.

    Returns 0 on full success, 1 if any run failed (failures are recorded in
    the summary and the remaining runs still execute).
    """
    plan.validate()
    specs = expand_plan(plan)
    out_dir = Path(plan.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if workers > 1:
        with multiprocessing.Pool(workers) as pool:
            outcomes = pool.map(_execute_safe, specs, chunksize=1)
    else:
        outcomes = [_execute_safe(s) for s in specs]

    results: dict[str, tuple[RunSpec, MetricsReport]] = {}
    errors: dict[str, str] = {}
    for spec, outcome in outcomes:
        if isinstance(outcome, Exception):
            errors[spec.run_id] = f"{type(outcome).__name__}: {outcome}"
        else:
            results[spec.run_id] = (spec, outcome)

    rows = [METRICS_HEADER]
    for spec in specs:
        if spec.run_id in results:
            rows.append(metrics_row(*results[spec.run_id]))
    (out_dir / "metrics.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")

    share_rows = [SHARES_HEADER]
    for spec in specs:
        if spec.run_id not in results or spec.algorithm == "dvr_only":
            continue
        base_id = f"{spec.sweep}-{point_label(spec.point)}-dvr_only-s{spec.seed}"
        if base_id not in results:
            continue
        _, rep = results[spec.run_id]
        _, base = results[base_id]
        for as_id in sorted(set(base.per_as_throughput_share) | set(rep.per_as_throughput_share)):
            share_rows.append(",".join([
                spec.run_id, as_id,
                _fmt(base.per_as_throughput_share.get(as_id, 0.0)),
                _fmt(rep.per_as_throughput_share.get(as_id, 0.0)),
            ]))
    (out_dir / "shares.csv").write_text("\n".join(share_rows) + "\n", encoding="utf-8")

    summary = {"sweep": plan.sweep, "points": [], "errors": errors}
    for point in plan.points:
        for algorithm in plan.algorithms:
            vals = {"throughput_bps": [], "overflow_bps": [], "mean_latency_s": []}
            for seed in plan.seeds:
                rid = f"{plan.sweep}-{point_label(point)}-{algorithm}-s{seed}"
                if rid not in results:
                    continue
                _, rep = results[rid]
                vals["throughput_bps"].append(rep.throughput_bps)
                vals["overflow_bps"].append(rep.overflow_bps)
                vals["mean_latency_s"].append(rep.mean_batch_latency_s)
            stats = {}
            for key, series in vals.items():
                if series:
                    stats[key] = {"mean": sum(series) / len(series),
                                  "min": min(series), "max": max(series)}
            summary["points"].append({"point": point, "algorithm": algorithm,
                                      "n_runs": len(vals["throughput_bps"]), "metrics": stats})
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                                          encoding="utf-8")
    return 1 if errors else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bpte",
        description="Run backpressure traffic-engineering experiment plans")
    parser.add_argument("--plan", required=True, help="plan YAML file")
    parser.add_argument("--out", default=None, help="output directory (overrides plan)")
    parser.add_argument("--workers", type=int, default=max(1, os.cpu_count() or 1))
    parser.add_argument("--preset", choices=sorted(PRESETS), default=None)
    args = parser.parse_args(argv)
    try:
        plan = load_plan(args.plan, preset=args.preset, output_dir=args.out)
    except (PlanError, OSError, yaml.YAMLError) as exc:
        print(f"plan error: {exc}", file=sys.stderr)
        return 2
    return run_plan(plan, workers=args.workers)


if __name__ == "__main__":
    sys.exit(main())
