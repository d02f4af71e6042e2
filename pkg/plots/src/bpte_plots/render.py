"""Charts from the simulator's CSV outputs.

Five figure kinds are supported; all consume the run-level metrics CSV except
``share_scatter``, which reads the per-AS share CSV:

* load_sweep    throughput / overflow / latency against offered load
* t_sweep       the same metrics against the actuation period
* share_scatter per-AS baseline share vs assisted share, with the fitted
                line and its Pearson correlation annotated
* prefix_sweep  two panels: throughput and control overhead against the
                per-AS prefix count
* size_sweep    throughput against topology size

Sweeps draw the mean line per algorithm with a min-max band. Rendering is
deterministic: one CSV renders to the same image bytes every time.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

FIGURE_KINDS = ("load_sweep", "t_sweep", "share_scatter", "prefix_sweep", "size_sweep")

METRICS_COLUMNS = ["run_id", "algorithm", "stitch", "T_s", "load_bps", "n_ases",
                   "n_prefixes", "seed", "throughput_bps", "overflow_bps",
                   "mean_latency_s", "overhead_bytes", "stability_avg_backlog"]
SHARES_COLUMNS = ["run_id", "as_id", "dvr_share", "bpr_share"]

X_COLUMN = {"load_sweep": "load_bps", "t_sweep": "T_s",
            "prefix_sweep": "n_prefixes", "size_sweep": "n_ases"}
X_LABEL = {"load_sweep": "offered load per router (bit/s)",
           "t_sweep": "actuation period (s)",
           "prefix_sweep": "prefixes per AS",
           "size_sweep": "topology size (ASes)"}

_STYLE = {"figure.figsize": (8.0, 5.0), "figure.dpi": 110, "font.size": 9,
          "axes.grid": True, "grid.alpha": 0.35, "svg.hashsalt": "bpte"}


class RenderError(ValueError):
    pass


@dataclass(frozen=True)
class FigureSpec:
    input_csv: Path
    figure_kind: str
    output: Path

    def validate(self) -> None:
        if self.figure_kind not in FIGURE_KINDS:
            raise RenderError(f"unknown figure kind {self.figure_kind!r}; "
                              f"expected one of {FIGURE_KINDS}")


def read_csv(path: Path, expected: list[str]) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in expected if c not in header]
        if missing:
            raise RenderError(f"{path}: missing column {missing[0]!r}")
        return list(reader)


def algorithm_label(row: dict) -> str:
    if row["stitch"] == "none":
        return row["algorithm"]
    return f"{row['algorithm']}+{row['stitch']}"


def pearson_r(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2 or x.std() == 0 or y.std() == 0:
        return float("nan")
    return float(np.corrcoef(x, y)[0, 1])


def _series(rows, kind, metric):
    """(algorithm, x) -> list of metric values."""
    xcol = X_COLUMN[kind]
    out: dict[str, dict[float, list[float]]] = {}
    for row in rows:
        algo = algorithm_label(row)
        x = float(row[xcol])
        out.setdefault(algo, {}).setdefault(x, []).append(float(row[metric]))
    return out


def _plot_band(ax, series, ylabel):
    for algo in sorted(series):
        pts = series[algo]
        xs = sorted(pts)
        mean = [sum(pts[x]) / len(pts[x]) for x in xs]
        lo = [min(pts[x]) for x in xs]
        hi = [max(pts[x]) for x in xs]
        line, = ax.plot(xs, mean, marker="o", markersize=3, label=algo)
        ax.fill_between(xs, lo, hi, alpha=0.18, color=line.get_color())
    ax.set_ylabel(ylabel)
    if series:
        ax.legend(fontsize=7)


def render_sweep(rows, kind, out_path):
    fig, axes = plt.subplots(3, 1, sharex=True, figsize=(8.0, 8.5))
    for ax, (metric, label) in zip(axes, [("throughput_bps", "throughput (bit/s)"),
                                          ("overflow_bps", "overflow (bit/s)"),
                                          ("mean_latency_s", "mean batch latency (s)")]):
        _plot_band(ax, _series(rows, kind, metric), label)
    axes[-1].set_xlabel(X_LABEL[kind])
    fig.tight_layout()
    return fig


def render_share_scatter(rows, out_path):
    fig, ax = plt.subplots()
    x = [float(r["dvr_share"]) for r in rows]
    y = [float(r["bpr_share"]) for r in rows]
    ax.scatter(x, y, s=14, alpha=0.7)
    r = pearson_r(x, y)
    if len(x) >= 2 and not np.isnan(r):
        slope, intercept = np.polyfit(x, y, 1)
        xs = np.linspace(min(x), max(x), 50)
        ax.plot(xs, slope * xs + intercept, lw=1.0)
    ax.annotate(f"Pearson r = {r:.6f}", xy=(0.04, 0.94), xycoords="axes fraction")
    ax.set_xlabel("per-AS traffic share, plain distance-vector")
    ax.set_ylabel("per-AS traffic share, assisted")
    fig.tight_layout()
    return fig


def render_prefix(rows, out_path):
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 4.2))
    _plot_band(axes[0], _series(rows, "prefix_sweep", "throughput_bps"), "throughput (bit/s)")
    overhead = _series(rows, "prefix_sweep", "overhead_bytes")
    _plot_band(axes[1], overhead, "control overhead (bytes)")
    for ax in axes:
        ax.set_xlabel(X_LABEL["prefix_sweep"])
    fig.tight_layout()
    return fig


def render(spec: FigureSpec) -> Path:
    """Produce the image for the spec; returns the output path."""
    spec.validate()
    with plt.rc_context(_STYLE):
        if spec.figure_kind == "share_scatter":
            rows = read_csv(spec.input_csv, SHARES_COLUMNS)
            fig = render_share_scatter(rows, spec.output)
        else:
            rows = read_csv(spec.input_csv, METRICS_COLUMNS)
            if not rows:
                print(f"warning: {spec.input_csv} has no data rows; rendering empty axes",
                      file=sys.stderr)
            if spec.figure_kind == "prefix_sweep":
                fig = render_prefix(rows, spec.output)
            else:
                fig = render_sweep(rows, spec.figure_kind, spec.output)
        spec.output.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(spec.output, metadata=_image_metadata(spec.output))
        plt.close(fig)
    return spec.output


def _image_metadata(path: Path):
    # strip volatile metadata so identical inputs give identical bytes
    suffix = path.suffix.lower()
    if suffix == ".png":
        return {"Software": "bpte-plots"}
    if suffix == ".svg":
        return {"Date": None}
    return None


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="bpte-plots",
                                     description="Render charts from simulator CSVs")
    sub = parser.add_subparsers(dest="command", required=True)
    r = sub.add_parser("render", help="render one figure")
    r.add_argument("--csv", required=True, type=Path)
    r.add_argument("--kind", required=True, choices=FIGURE_KINDS)
    r.add_argument("--out", required=True, type=Path)
    args = parser.parse_args(argv)
    try:
        render(FigureSpec(input_csv=args.csv, figure_kind=args.kind, output=args.out))
    except (RenderError, OSError) as exc:
        print(f"render error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
