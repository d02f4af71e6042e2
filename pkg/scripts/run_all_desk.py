#!/usr/bin/env python3
"""Run every desk-scale experiment plan and render the corresponding charts.

Produces, under out/: one directory per plan with metrics/shares CSVs and a
summary JSON, plus rendered PNGs when the plotting package is installed.
"""

from __future__ import annotations

import os
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
PLANS = ["desk_load", "desk_period", "desk_distribution", "desk_prefixes", "desk_size"]
FIGURES = {
    "desk_load": ("load_sweep", "metrics.csv"),
    "desk_period": ("t_sweep", "metrics.csv"),
    "desk_distribution": ("share_scatter", "shares.csv"),
    "desk_prefixes": ("prefix_sweep", "metrics.csv"),
    "desk_size": ("size_sweep", "metrics.csv"),
}


def main() -> int:
    workers = str(os.cpu_count() or 1)
    for plan in PLANS:
        plan_file = ROOT / "scripts" / "plans" / f"{plan}.yaml"
        print(f"== running {plan_file.name}")
        rc = subprocess.call([sys.executable, "-m", "bpte.cli",
                              "--plan", str(plan_file), "--workers", workers],
                             cwd=ROOT)
        if rc != 0:
            print(f"plan {plan} exited with {rc}", file=sys.stderr)
            return rc
    for plan, (kind, csv_name) in FIGURES.items():
        csv_path = ROOT / "out" / plan / csv_name
        out_path = ROOT / "out" / plan / f"{kind}.png"
        if not csv_path.exists():
            continue
        rc = subprocess.call([sys.executable, "-m", "bpte_plots.render", "render",
                              "--csv", str(csv_path), "--kind", kind,
                              "--out", str(out_path)])
        if rc != 0:
            print(f"figure {kind} failed (is bpte-plots installed?)", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
