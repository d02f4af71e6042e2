"""Inter-domain traffic generation driven by a degree-based popularity matrix,
plus the one-window moving-average forecaster feeding the foresight variant.

Traffic is organized in fixed-size batches (default 50 MiB, matching the NIC
buffer halves) arriving as independent Poisson streams per (entry router,
destination commodity). Rates are scaled so the expected generated volume per
router matches the scenario's mean router load.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .backpressure import ForecastView
from .topology import CommoditySpace, Topology

DEFAULT_BATCH_BYTES = 50 * 2**20

MODE_LINEAR = "linear"
MODE_SKEWED = "skewed"


@dataclass(frozen=True)
class PopularityMatrix:
    p_i: dict[str, float]
    p_ij: dict[tuple[str, str], float]


def popularity(degrees: dict[str, int]) -> PopularityMatrix:
    """Degree-proportional popularity: p_i = d_i / sum(d); p_ij = p_j / (1 - p_i)."""
    if len(degrees) < 2:
        raise ValueError("popularity needs at least two ASes")
    if any(d < 1 for d in degrees.values()):
        raise ValueError("all degrees must be >= 1")
    total = float(sum(degrees.values()))
    p_i = {a: degrees[a] / total for a in degrees}
    p_ij = {}
    for i in degrees:
        for j in degrees:
            p_ij[(i, j)] = 0.0 if i == j else p_i[j] / (1.0 - p_i[i])
    return PopularityMatrix(p_i=p_i, p_ij=p_ij)


class Batch:
    __slots__ = ("id", "size", "source_router", "commodity", "created_at",
                 "delivered_at", "dropped", "enqueued_at", "hops", "_ver", "_link")

    def __init__(self, id: int, size: int, source_router: str, commodity: str, created_at: float):
        self.id = id
        self.size = size
        self.source_router = source_router
        self.commodity = commodity
        self.created_at = created_at
        self.delivered_at = None
        self.dropped = False
        self.enqueued_at = created_at
        self.hops = -1  # becomes 0 on first arrival at the source router
        self._ver = None   # routing-decision cache (engine internal)
        self._link = None

    def __repr__(self):
        return f"Batch({self.id}, {self.commodity}, t={self.created_at:.3f})"


@dataclass(frozen=True)
class TrafficScenario:
    mode: str = MODE_LINEAR
    input_as: str | None = None
    target_mean_router_load: float = 0.0   # bytes/second generated per router
    seed: int = 0
    batch_bytes: int = DEFAULT_BATCH_BYTES
    # slow per-(entry, destination) demand modulation: a mean-one lognormal
    # factor following an AR(1) walk across windows. Real inter-domain demand
    # is short-term predictable, which is what makes a one-window forecast
    # informative; zero keeps arrivals strictly stationary.
    rate_wander_std: float = 0.0
    rate_wander_rho: float = 0.85

    def __post_init__(self):
        if self.mode not in (MODE_LINEAR, MODE_SKEWED):
            raise ValueError(f"unknown traffic mode {self.mode!r}")
        if self.mode == MODE_SKEWED and not self.input_as:
            raise ValueError("skewed mode requires input_as")
        if not 0.0 <= self.rate_wander_rho < 1.0:
            raise ValueError("rate_wander_rho must be in [0, 1)")
        if self.rate_wander_std < 0.0:
            raise ValueError("rate_wander_std must be non-negative")


class TrafficSource:
    """Pre-computed arrival rates per (entry router, destination AS)."""

    def __init__(self, t: Topology, scenario: TrafficScenario, pm: PopularityMatrix,
                 commodities: CommoditySpace):
        self.scenario = scenario
        self.commodities = commodities
        n_routers = len(t.routers)
        total_rate = scenario.target_mean_router_load * n_routers  # bytes/s
        self.pairs: list[tuple[str, str]] = []   # (router, dest AS)
        rates = []
        groups = []          # modulation group per pair: one per (entry AS, dest)
        group_index: dict[tuple[str, str], int] = {}
        for a in sorted(t.ases):
            if scenario.mode == MODE_SKEWED:
                if a != scenario.input_as:
                    continue
                entry_rate = total_rate
            else:
                entry_rate = total_rate * pm.p_i[a]
            members = sorted(t.ases[a].router_ids)
            per_router = entry_rate / len(members)
            for dest in sorted(t.ases):
                frac = pm.p_ij[(a, dest)]
                if frac <= 0.0:
                    continue
                gid = group_index.setdefault((a, dest), len(group_index))
                for rid in members:
                    self.pairs.append((rid, dest))
                    rates.append(per_router * frac / scenario.batch_bytes)  # batches/s
                    groups.append(gid)
        self.rates = np.asarray(rates, dtype=float)
        self.groups = np.asarray(groups, dtype=int)
        self.n_groups = len(group_index)
        self._wander_x: np.ndarray | None = None
        self._dest_commodities = {a: commodities.hosted_by(a) for a in t.ases}
        self._next_id = 0

    def _window_rates(self, rng: np.random.Generator) -> np.ndarray:
        """Per-pair rates for the next window; identical AS instances share
        one demand factor, which drifts as a mean-reverting walk."""
        sigma = self.scenario.rate_wander_std
        if sigma <= 0.0 or self.n_groups == 0:
            return self.rates
        rho = self.scenario.rate_wander_rho
        if self._wander_x is None:
            self._wander_x = rng.normal(0.0, sigma, size=self.n_groups)
        else:
            step = rng.normal(0.0, sigma * math.sqrt(1.0 - rho * rho), size=self.n_groups)
            self._wander_x = rho * self._wander_x + step
        factors = np.exp(self._wander_x - 0.5 * sigma * sigma)  # mean-one lognormal
        return self.rates * factors[self.groups]

    def generate(self, window: tuple[float, float], rng: np.random.Generator) -> list[Batch]:
        """Poisson arrivals in [t0, t1), sorted by time, ids sequential.

        Same generator state and window give the identical batch sequence.
        """
        t0, t1 = window
        dt = t1 - t0
        if dt <= 0:
            raise ValueError("window must have positive length")
        if len(self.rates) == 0 or self.scenario.target_mean_router_load <= 0:
            return []
        counts = rng.poisson(self._window_rates(rng) * dt)
        batches: list[Batch] = []
        size = self.scenario.batch_bytes
        for idx in np.nonzero(counts)[0]:
            rid, dest_as = self.pairs[idx]
            coms = self._dest_commodities[dest_as]
            n = int(counts[idx])
            times = t0 + rng.random(n) * dt
            if len(coms) == 1:
                chosen = [coms[0]] * n
            else:
                chosen = [coms[k] for k in rng.integers(0, len(coms), size=n)]
            for k in range(n):
                batches.append(Batch(0, size, rid, chosen[k], float(times[k])))
        batches.sort(key=lambda b: (b.created_at, b.source_router, b.commodity))
        for b in batches:
            b.id = self._next_id
            self._next_id += 1
        return batches


def generate(scenario: TrafficScenario, pm: PopularityMatrix, t: Topology,
             commodities: CommoditySpace, window: tuple[float, float],
             rng: np.random.Generator) -> list[Batch]:
    """One-shot generation for a window (fresh source each call)."""
    return TrafficSource(t, scenario, pm, commodities).generate(window, rng)


@dataclass
class GenerationHistory:
    """Append-only per-(AS, commodity) record of generated bytes per window."""
    window_s: float
    totals: dict[tuple[str, str], float] = field(default_factory=dict)
    _current: dict[tuple[str, str], float] = field(default_factory=dict)
    _previous: dict[tuple[str, str], float] = field(default_factory=dict)

    def record(self, as_id: str, commodity: str, size: int) -> None:
        key = (as_id, commodity)
        self._current[key] = self._current.get(key, 0.0) + size
        self.totals[key] = self.totals.get(key, 0.0) + size

    def roll(self) -> None:
        """Close the current window; it becomes the forecasting basis."""
        self._previous = self._current
        self._current = {}

    def last_window(self) -> dict[tuple[str, str], float]:
        return dict(self._previous)


def forecast(history: GenerationHistory, window_s: float | None = None) -> ForecastView:
    """One-step moving average: next window's generation equals the last one's."""
    return ForecastView(g=history.last_window(), window_s=window_s or history.window_s)


def mean_rates(history: GenerationHistory, elapsed_s: float) -> dict[tuple[str, str], float]:
    """Long-run mean production rate in bytes/second per (AS, commodity)."""
    if elapsed_s <= 0:
        return {}
    return {k: v / elapsed_s for k, v in history.totals.items()}
