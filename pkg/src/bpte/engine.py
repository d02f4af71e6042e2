"""Deterministic discrete-event simulation of the router network.

Routers hold a shared memory pool (tail-drop beyond capacity) feeding per-link
NIC twin-buffers (one batch serializing, one staged). Batches move
store-and-forward; the central coordinator runs every period, its message
exchange unaffected by data-plane congestion. Per period and per (router,
commodity), the balance U' = max(0, U - O) + I + G is audited against an
independent reconstruction from the queues.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from . import controller as ctrl
from . import policy as policy_mod
from . import topology as topo_mod
from . import traffic as traffic_mod
from .backpressure import BacklogView, ForecastView
from .controller import Controller, ControllerConfig, InstalledRule, build_report
from .topology import AS_LEVEL, PREFIX_LEVEL, Topology
from .traffic import Batch, GenerationHistory, TrafficScenario, TrafficSource

SEGMENTS = 20
T_CRIT_19 = 2.0930240544082634  # two-sided 95% Student-t, 19 degrees of freedom

EV_TICK = 0
EV_ARRIVE = 1
EV_COMPLETE = 2
EV_RULE_EXPIRY = 3

_KIND_NAMES = {EV_TICK: "controller_tick", EV_ARRIVE: "batch_arrival",
               EV_COMPLETE: "transmission_complete", EV_RULE_EXPIRY: "rule_expiry"}

ALGORITHMS = ("dvr_only", "sbpr", "fbpr",
              "sbpr+nhops", "fbpr+nhops", "sbpr+stitch", "fbpr+stitch")


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Event:
    """Trace-facing event record; the loop itself runs on plain tuples."""
    time: float
    kind: str
    payload: object = None


@dataclass(frozen=True)
class Scenario:
    mode: str = traffic_mod.MODE_LINEAR
    input_as: str | None = None
    mean_router_load_bps: float = 0.0          # offered bits/second per router
    traffic_seed: int | None = None            # defaults to the run seed
    batch_bytes: int = traffic_mod.DEFAULT_BATCH_BYTES
    granularity: str = AS_LEVEL
    prefixes_per_as: int = 1
    deny: dict[str, set[str]] = field(default_factory=dict)
    router_memory_bytes: int = 4 * 2**30
    safety_fraction: float = 0.1
    idle_timeout_s: float | None = None        # defaults to the period
    alarm_level_bytes: float = 0.0
    stitch_timeout_s: float = 5.0
    report_cap_entries: int | None = None      # fixed-size reports at prefix level
    rate_wander_std: float = 0.0
    rate_wander_rho: float = 0.85


@dataclass(frozen=True)
class MetricsReport:
    throughput_bps: float
    overflow_bps: float
    mean_batch_latency_s: float
    per_as_throughput_share: dict[str, float]
    control_overhead_bytes: int
    confidence: dict[str, float]
    stability_avg_backlog: float
    # run accounting
    duration_s: float = 0.0
    generated_bytes: int = 0
    delivered_bytes: int = 0
    dropped_bytes: int = 0
    loop_dropped_bytes: int = 0
    queued_bytes_end: int = 0
    in_flight_bytes_end: int = 0
    delivered_batches: int = 0
    report_bytes: int = 0
    rule_bytes: int = 0
    n_ticks: int = 0
    audit_violations: int = 0
    rules_installed: int = 0


def queue_update(u: float, o: float, i: float, g: float) -> float:
    """One period of queue dynamics: survivors of the old backlog plus arrivals."""
    if min(u, o, i, g) < 0:
        raise ValueError("queue quantities must be non-negative")
    return max(0.0, u - o) + i + g


def stability_metric(samples) -> float:
    """Running time-average of the sampled aggregate backlog."""
    samples = list(samples)
    if not samples:
        raise ValueError("at least one sample required")
    return sum(samples) / len(samples)


def parse_algorithm(name: str) -> tuple[str, str]:
    """Split an algorithm name into (variant, stitch mode)."""
    if name == "dvr_only":
        return ("dvr_only", "none")
    if name in ("sbpr", "fbpr"):
        return (name, "none")
    if "+" in name:
        variant, stitch = name.split("+", 1)
        if variant in ("sbpr", "fbpr") and stitch in ("nhops", "stitch"):
            return (variant, stitch)
    raise ScenarioError(f"unknown algorithm {name!r}")


class _Nic:
    __slots__ = ("link_id", "to_router", "rate", "latency", "transmitting", "staged", "busy_until")

    def __init__(self, link_id, to_router, capacity_bps, latency_s):
        self.link_id = link_id
        self.to_router = to_router
        self.rate = capacity_bps
        self.latency = latency_s
        self.transmitting = None
        self.staged = None
        self.busy_until = 0.0


class _Router:
    __slots__ = ("rid", "as_id", "queue", "occ", "capacity", "nics")

    def __init__(self, rid, as_id, capacity):
        self.rid = rid
        self.as_id = as_id
        self.queue = []      # shared memory FIFO
        self.occ = 0
        self.capacity = capacity
        self.nics = {}       # link_id -> _Nic


class _Rule:
    __slots__ = ("owner", "commodity", "to_as", "link_id", "from_router",
                 "installed_at", "last_hit", "backlog_at_install", "active")

    def __init__(self, owner, commodity, to_as, link_id, from_router, now, backlog):
        self.owner = owner
        self.commodity = commodity
        self.to_as = to_as
        self.link_id = link_id
        self.from_router = from_router
        self.installed_at = now
        self.last_hit = now
        self.backlog_at_install = backlog
        self.active = True


def run(t: Topology, scenario: Scenario, algorithm: str, duration_s: float,
        T_s: float, seed: int, trace=None) -> MetricsReport:
    """Simulate one configuration; identical inputs and seed give an identical report."""
    variant, stitch = parse_algorithm(algorithm)
    if duration_s < 10 * T_s:
        raise ScenarioError("duration must cover at least ten periods")
    topo_mod.validate(t)
    sim = _Simulation(t, scenario, variant, stitch, duration_s, T_s, seed, trace)
    return sim.run()


class _Simulation:
    def __init__(self, t, scenario, variant, stitch, duration, period, seed, trace):
        self.t = t
        self.scenario = scenario
        self.variant = variant
        self.stitch = stitch
        self.duration = float(duration)
        self.period = float(period)
        self.seed = seed
        self.trace = trace

        if scenario.granularity == PREFIX_LEVEL:
            t = topo_mod.assign_prefixes(t, scenario.prefixes_per_as)
            self.t = t
        self.commodities = topo_mod.build_commodities(t, scenario.granularity)
        self.host_of = self.commodities.host
        self.host_index = {a: i for i, a in enumerate(sorted(t.ases))}
        self.dvr = policy_mod.compute_dvr(t, AS_LEVEL)
        self.dvr_next = self.dvr.next_hop

        self.controller_on = variant != "dvr_only"
        if self.controller_on:
            cfg = ControllerConfig(period_s=period, variant=variant,
                                   stitch=("nhops" if stitch == "nhops" else
                                           "stitch" if stitch == "stitch" else "none"),
                                   alarm_level_bytes=scenario.alarm_level_bytes,
                                   stitch_timeout_s=scenario.stitch_timeout_s)
            self.controller = Controller(t, self.dvr, self.commodities, cfg,
                                         deny=scenario.deny)
        else:
            self.controller = None

        mem = scenario.router_memory_bytes
        self.routers = {rid: _Router(rid, r.as_id, mem) for rid, r in sorted(t.routers.items())}
        for lid in sorted(t.links):
            l = t.links[lid]
            self.routers[l.from_router].nics[lid] = _Nic(lid, l.to_router, l.capacity_bps, l.latency_s)

        # egress tables: parallel direct links per (router, neighbor AS) and
        # parallel border routers per (AS, neighbor AS); equal-cost choices are
        # spread deterministically by source router and destination
        direct_opts: dict[tuple[str, str], list[str]] = {}
        border_opts: dict[tuple[str, str], list[str]] = {}
        for lid in sorted(t.links):
            l = t.links[lid]
            if l.kind != "peering":
                continue
            a, b = t.as_of_router(l.from_router), t.as_of_router(l.to_router)
            direct_opts.setdefault((l.from_router, b), []).append(lid)
            lst = border_opts.setdefault((a, b), [])
            if l.from_router not in lst:
                lst.append(l.from_router)
        self.direct_opts = {k: tuple(v) for k, v in direct_opts.items()}
        self.border_opts = {k: tuple(sorted(v)) for k, v in border_opts.items()}
        self.router_index = {}
        for a in sorted(t.ases):
            for i, rid in enumerate(sorted(t.ases[a].router_ids)):
                self.router_index[rid] = i
        self.internal: dict[tuple[str, str], str] = {}
        for lid in sorted(t.links):
            l = t.links[lid]
            if l.kind == "internal":
                self.internal[(l.from_router, l.to_router)] = lid
        self.link_from = {lid: l.from_router for lid, l in t.links.items()}
        self.link_is_peering = {lid: l.kind == "peering" for lid, l in t.links.items()}
        self.as_of = {rid: r.as_id for rid, r in t.routers.items()}

        # traffic
        tseed = scenario.traffic_seed if scenario.traffic_seed is not None else seed
        self.rng = np.random.default_rng(tseed)
        pm = traffic_mod.popularity({a: max(1, n.degree) for a, n in t.ases.items()})
        tsc = TrafficScenario(mode=scenario.mode, input_as=scenario.input_as,
                              target_mean_router_load=scenario.mean_router_load_bps / 8.0,
                              seed=tseed, batch_bytes=scenario.batch_bytes,
                              rate_wander_std=scenario.rate_wander_std,
                              rate_wander_rho=scenario.rate_wander_rho)
        self.source = TrafficSource(t, tsc, pm, self.commodities)
        self.history = GenerationHistory(window_s=period)

        # live state
        self.rules: dict[tuple[str, str], _Rule] = {}
        self.assign_ver: dict[str, int] = {a: 0 for a in t.ases}
        self.as_u: dict[tuple[str, str], int] = {}
        self.events: list = []
        self.seq = 0
        self.hop_limit = 8 * max(1, len(t.ases))

        # accounting
        self.generated = 0
        self.delivered = 0
        self.delivered_n = 0
        self.dropped = 0
        self.loop_dropped = 0
        self.in_flight = 0
        self.traversal = 0
        self.entering: dict[str, int] = {a: 0 for a in t.ases}
        self.report_bytes = 0
        self.rule_bytes = 0
        self.rules_installed = 0
        self.n_ticks = 0
        self.audit_violations = 0
        self.backlog_samples: list[int] = []

        self.u_prev: dict[tuple[str, str], int] = {}
        self.cnt_o: dict[tuple[str, str], int] = {}
        self.cnt_i: dict[tuple[str, str], int] = {}
        self.cnt_g: dict[tuple[str, str], int] = {}
        self.period_start = 0.0

        seg = self.duration / SEGMENTS
        self.seg_len = seg
        self.seg_thru = [0] * SEGMENTS
        self.seg_drop = [0] * SEGMENTS
        self.seg_lat_sum = [0.0] * SEGMENTS
        self.seg_lat_n = [0] * SEGMENTS
        self.lat_sum = 0.0

    # -- event plumbing -------------------------------------------------

    def push(self, time, prio, code, a=None, b=None):
        self.seq += 1
        heapq.heappush(self.events, (time, prio, self.seq, code, a, b))

    def _emit(self, time, code, payload):
        if self.trace is not None:
            self.trace(Event(time=time, kind=_KIND_NAMES[code], payload=payload))

    # -- routing --------------------------------------------------------

    def next_link(self, router: _Router, commodity: str, now: float):
        """Current egress link at this router for the commodity, or None.

        Returns "deliver" when the router's AS hosts the commodity. Priority
        rules are consulted first and lazily expired on use when the local
        backlog fell below the safety level or the rule idled out.
        """
        as_n = router.as_id
        host = self.host_of[commodity]
        if as_n == host:
            return "deliver"
        rule = self.rules.get((as_n, commodity))
        if rule is not None:
            expire = False
            if self.as_u.get((as_n, commodity), 0) < self.scenario.safety_fraction * rule.backlog_at_install:
                expire = True
            else:
                idle = self.scenario.idle_timeout_s
                if idle is not None and now - rule.last_hit >= idle:
                    expire = True
            if expire:
                del self.rules[(as_n, commodity)]
                self.assign_ver[as_n] += 1
            else:
                rule.last_hit = now
                if router.rid == rule.from_router:
                    return rule.link_id
                return self.internal[(router.rid, rule.from_router)]
        nxt = self.dvr_next.get((as_n, host))
        if nxt is None:
            return None
        opts = self.direct_opts.get((router.rid, nxt))
        if opts is not None:
            return opts[0]  # a router keeps one fixed egress per neighbor
        borders = self.border_opts[(as_n, nxt)]
        target = borders[self.router_index[router.rid] % len(borders)]
        return self.internal[(router.rid, target)]

    def _cached_link(self, router: _Router, batch: Batch, now: float):
        ver = self.assign_ver[router.as_id]
        if batch._ver == (ver, router.rid):
            return batch._link
        link = self.next_link(router, batch.commodity, now)
        batch._ver = (ver, router.rid)
        batch._link = link
        return link

    # -- queue / NIC mechanics -------------------------------------------

    def enqueue(self, router: _Router, batch: Batch, now: float, generated: bool):
        size = batch.size
        if router.occ + size > router.capacity:
            self.dropped += size
            self.in_flight -= size
            batch.dropped = True
            seg = min(SEGMENTS - 1, int(now / self.seg_len))
            self.seg_drop[seg] += size
            return
        self.in_flight -= size
        router.occ += size
        batch.enqueued_at = now
        key = (router.as_id, batch.commodity)
        self.as_u[key] = self.as_u.get(key, 0) + size
        ckey = (router.rid, batch.commodity)
        if generated:
            self.cnt_g[ckey] = self.cnt_g.get(ckey, 0) + size
            # forecasting history counts what actually entered the node;
            # source-dropped bytes never join its accumulated traffic
            self.history.record(router.as_id, batch.commodity, size)
        else:
            self.cnt_i[ckey] = self.cnt_i.get(ckey, 0) + size
        router.queue.append(batch)
        link = self._cached_link(router, batch, now)
        if link is not None and link != "deliver":
            nic = router.nics.get(link)
            if nic is not None and (nic.transmitting is None or nic.staged is None):
                self.fill_nic(router, nic, now)

    def dequeue_to_nic(self, router: _Router, idx: int, now: float):
        batch = router.queue.pop(idx)
        size = batch.size
        router.occ -= size
        key = (router.as_id, batch.commodity)
        self.as_u[key] -= size
        ckey = (router.rid, batch.commodity)
        if batch.enqueued_at >= self.period_start:
            # arrived this period: net it out of the arrival counters
            generated = batch.hops == 0 and batch.source_router == router.rid
            if generated:
                self.cnt_g[ckey] = self.cnt_g.get(ckey, 0) - size
            else:
                self.cnt_i[ckey] = self.cnt_i.get(ckey, 0) - size
        else:
            self.cnt_o[ckey] = self.cnt_o.get(ckey, 0) + size
        self.in_flight += size
        return batch

    def fill_nic(self, router: _Router, nic: _Nic, now: float):
        """Pull queued batches currently routed to this NIC into its free slots."""
        while nic.transmitting is None or nic.staged is None:
            found = -1
            queue = router.queue
            for i in range(len(queue)):
                if self._cached_link(router, queue[i], now) == nic.link_id:
                    found = i
                    break
            if found < 0:
                return
            batch = self.dequeue_to_nic(router, found, now)
            if nic.transmitting is None:
                self.start_transmission(nic, batch, now)
            else:
                nic.staged = batch

    def start_transmission(self, nic: _Nic, batch: Batch, now: float):
        nic.transmitting = batch
        done = now + batch.size * 8.0 / nic.rate
        nic.busy_until = done
        self.push(done, 1, EV_COMPLETE, nic)

    def on_complete(self, nic: _Nic, now: float):
        batch = nic.transmitting
        nic.transmitting = None
        self._emit(now, EV_COMPLETE, (nic.link_id, batch.id))
        if self.link_is_peering[nic.link_id]:
            size = batch.size
            self.traversal += size
            to_as = self.as_of[nic.to_router]
            self.entering[to_as] += size
            seg = min(SEGMENTS - 1, int(now / self.seg_len))
            self.seg_thru[seg] += size
        if nic.latency > 0.0:
            self.push(now + nic.latency, 1, EV_ARRIVE, batch, nic.to_router)
        else:
            self.on_arrive(batch, nic.to_router, now)
        if nic.staged is not None:
            nxt, nic.staged = nic.staged, None
            self.start_transmission(nic, nxt, now)
        router = self.routers[self.link_from[nic.link_id]]
        self.fill_nic(router, nic, now)

    def on_arrive(self, batch: Batch, rid: str, now: float):
        self._emit(now, EV_ARRIVE, (batch.id, rid))
        router = self.routers[rid]
        batch.hops += 1  # first arrival (at the source, from the external NIC) lands on 0
        if batch.hops > self.hop_limit:
            self.loop_dropped += batch.size
            self.in_flight -= batch.size
            batch.dropped = True
            return
        if router.as_id == self.host_of[batch.commodity]:
            batch.delivered_at = now
            size = batch.size
            self.delivered += size
            self.delivered_n += 1
            self.in_flight -= size
            lat = now - batch.created_at
            self.lat_sum += lat
            seg = min(SEGMENTS - 1, int(now / self.seg_len))
            self.seg_lat_sum[seg] += lat
            self.seg_lat_n[seg] += 1
            return
        generated = batch.hops == 0 and batch.source_router == rid
        self.enqueue(router, batch, now, generated)

    # -- controller interaction -------------------------------------------

    def audit(self, now: float):
        """Check the per-period queue balance for every touched (router, commodity)."""
        u_now: dict[tuple[str, str], int] = {}
        for router in self.routers.values():
            for batch in router.queue:
                key = (router.rid, batch.commodity)
                u_now[key] = u_now.get(key, 0) + batch.size
        keys = set(self.u_prev) | set(self.cnt_o) | set(self.cnt_i) | set(self.cnt_g) | set(u_now)
        for key in keys:
            expected = queue_update(self.u_prev.get(key, 0), self.cnt_o.get(key, 0),
                                    self.cnt_i.get(key, 0), self.cnt_g.get(key, 0))
            if u_now.get(key, 0) != expected:
                self.audit_violations += 1
        self.u_prev = u_now
        self.cnt_o = {}
        self.cnt_i = {}
        self.cnt_g = {}
        self.period_start = now

    def generate_window(self, t0: float):
        t1 = min(t0 + self.period, self.duration)
        if t1 <= t0:
            return
        for batch in self.source.generate((t0, t1), self.rng):
            self.generated += batch.size
            self.in_flight += batch.size
            self.push(batch.created_at, 1, EV_ARRIVE, batch, batch.source_router)

    def on_tick(self, now: float):
        self._emit(now, EV_TICK, now)
        if now > 0:
            self.audit(now)
            self.backlog_samples.append(sum(self.as_u.values()))
        self.history.roll()  # the closed window becomes the forecasting basis
        if now > 0 and self.controller_on and now < self.duration:
            self.control_round(now)
        if now < self.duration:
            self.generate_window(now)
        if now + self.period <= self.duration:
            self.push(now + self.period, 0, EV_TICK)
        elif now < self.duration:
            self.push(self.duration, 0, EV_TICK)

    def control_round(self, now: float):
        self.n_ticks += 1
        # previous rules ran their full period
        if self.rules:
            self.rules.clear()
        reports = []
        cap = self.scenario.report_cap_entries
        if cap is None and self.scenario.granularity == PREFIX_LEVEL:
            cap = self.scenario.prefixes_per_as
        for a in sorted(self.t.ases):
            backlogs = {c: float(self.as_u.get((a, c), 0)) for c in self.commodities.ids
                        if self.as_u.get((a, c), 0) > 0 or cap is not None}
            rep = build_report(a, backlogs, self.commodities, now, max_entries=cap)
            reports.append(rep)
        forecasts = traffic_mod.forecast(self.history)
        result = self.controller.controller_tick(now, reports, forecasts)
        self.report_bytes += result.report_bytes
        self.rule_bytes += result.rule_bytes
        for p in result.proposals:
            lid = p.via_link
            from_router = self.link_from[lid]
            to_as = self.as_of[self.t.links[lid].to_router]
            backlog = self.as_u.get((p.owner_as, p.commodity), 0)
            self.rules[(p.owner_as, p.commodity)] = _Rule(
                p.owner_as, p.commodity, to_as, lid, from_router, now, backlog)
            self.rules_installed += 1
        for a in self.assign_ver:
            self.assign_ver[a] += 1
        # freshly idle NICs may now have eligible work
        for rid in self.routers:
            router = self.routers[rid]
            if not router.queue:
                continue
            for lid in router.nics:
                nic = router.nics[lid]
                if nic.transmitting is None or nic.staged is None:
                    self.fill_nic(router, nic, now)

    # -- main loop ---------------------------------------------------------

    def run(self) -> MetricsReport:
        self.push(0.0, 0, EV_TICK)
        events = self.events
        duration = self.duration
        while events:
            time, prio, _seq, code, a, b = heapq.heappop(events)
            if time > duration:
                break
            if code == EV_ARRIVE:
                self.on_arrive(a, b, time)
            elif code == EV_COMPLETE:
                self.on_complete(a, time)
            elif code == EV_TICK:
                self.on_tick(time)
        return self.report()

    def report(self) -> MetricsReport:
        dur = self.duration
        queued = sum(r.occ for r in self.routers.values())
        throughput = self.traversal * 8.0 / dur
        overflow = self.dropped * 8.0 / dur
        mean_lat = self.lat_sum / self.delivered_n if self.delivered_n else 0.0
        total_in = sum(self.entering.values())
        shares = ({a: self.entering[a] / total_in for a in sorted(self.entering)}
                  if total_in > 0 else {})
        conf = {
            "throughput_bps": _halfwidth([v * 8.0 / self.seg_len for v in self.seg_thru]),
            "overflow_bps": _halfwidth([v * 8.0 / self.seg_len for v in self.seg_drop]),
            "mean_batch_latency_s": _halfwidth(
                [self.seg_lat_sum[i] / self.seg_lat_n[i]
                 for i in range(SEGMENTS) if self.seg_lat_n[i]]),
        }
        stability = (sum(self.backlog_samples) / len(self.backlog_samples)
                     if self.backlog_samples else 0.0)
        return MetricsReport(
            throughput_bps=throughput,
            overflow_bps=overflow,
            mean_batch_latency_s=mean_lat,
            per_as_throughput_share=shares,
            control_overhead_bytes=self.report_bytes + self.rule_bytes,
            confidence=conf,
            stability_avg_backlog=stability,
            duration_s=dur,
            generated_bytes=self.generated,
            delivered_bytes=self.delivered,
            dropped_bytes=self.dropped,
            loop_dropped_bytes=self.loop_dropped,
            queued_bytes_end=queued,
            in_flight_bytes_end=self.in_flight,
            delivered_batches=self.delivered_n,
            report_bytes=self.report_bytes,
            rule_bytes=self.rule_bytes,
            n_ticks=self.n_ticks,
            audit_violations=self.audit_violations,
            rules_installed=self.rules_installed,
        )


def _halfwidth(values) -> float:
    values = [v for v in values]
    n = len(values)
    if n < 2:
        return 0.0
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return T_CRIT_19 * math.sqrt(var / n)


def conservation_ok(report: MetricsReport) -> bool:
    """Generated bytes fully split into delivered, dropped, queued and in flight."""
    return (report.generated_bytes ==
            report.delivered_bytes + report.dropped_bytes + report.loop_dropped_bytes
            + report.queued_bytes_end + report.in_flight_bytes_end)
