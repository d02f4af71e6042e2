"""Central coordination: ingest congestion reports, derive priority rules,
manage their lifecycle, and account control-plane bytes exactly.

Wire framing is big-endian: an 8-byte ASCII AS id followed by 13-byte
entries. A report entry is a 4-byte IPv4 address, a 1-byte mask length and an
8-byte IEEE-754 load in GiB; a rule entry replaces the float with an 8-byte
ASCII link id.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace

from .backpressure import (BacklogView, ForecastView, NeighborFilter, RuleProposal,
                           bp_dv_stitch, derive_proposals, nhops_filter, peering_filter)
from .policy import RoutingTable
from .topology import CommoditySpace, PrefixRecord, Topology

HEADER_BYTES = 8
ENTRY_BYTES = 13
GIB = float(2**30)

STATE_ACTIVE = "active"
STATE_EXPIRED = "expired"

ALGORITHMS = ("sbpr", "fbpr", "bp_dv_stitch", "nhops_stitch")


class CodecError(ValueError):
    pass


def message_size(kind: str, n_entries: int) -> int:
    """Serialized size in bytes; reports and rule messages share field widths."""
    if kind not in ("report", "rule"):
        raise ValueError(f"unknown message kind {kind!r}")
    if n_entries < 0:
        raise ValueError("n_entries must be >= 0")
    return HEADER_BYTES + ENTRY_BYTES * n_entries


def _pack_id(ident: str) -> bytes:
    raw = ident.encode("ascii")
    if len(raw) > 8:
        raise CodecError(f"identifier {ident!r} exceeds 8 ASCII bytes")
    return raw.ljust(8, b"\x00")


def _unpack_id(raw: bytes) -> str:
    return raw.rstrip(b"\x00").decode("ascii")


@dataclass(frozen=True)
class CongestionReport:
    as_id: str
    entries: tuple[tuple[int, int, float], ...]  # (prefix_ip, prefix_mask, load_gb)
    timestamp: float

    def encode(self) -> bytes:
        out = [_pack_id(self.as_id)]
        for ip, mask, load_gb in self.entries:
            out.append(struct.pack(">IBd", ip, mask, load_gb))
        return b"".join(out)

    @staticmethod
    def decode(raw: bytes, timestamp: float = 0.0) -> "CongestionReport":
        if len(raw) < HEADER_BYTES or (len(raw) - HEADER_BYTES) % ENTRY_BYTES:
            raise CodecError(f"report payload of {len(raw)} bytes is not 8 + 13k")
        as_id = _unpack_id(raw[:HEADER_BYTES])
        entries = []
        for off in range(HEADER_BYTES, len(raw), ENTRY_BYTES):
            ip, mask, load = struct.unpack(">IBd", raw[off:off + ENTRY_BYTES])
            entries.append((ip, mask, load))
        return CongestionReport(as_id=as_id, entries=tuple(entries), timestamp=timestamp)


@dataclass(frozen=True)
class RuleMessage:
    as_id: str
    rules: tuple[tuple[int, int, str], ...]  # (prefix_ip, prefix_mask, link_id)

    def encode(self) -> bytes:
        out = [_pack_id(self.as_id)]
        for ip, mask, link_id in self.rules:
            out.append(struct.pack(">IB", ip, mask) + _pack_id(link_id))
        return b"".join(out)

    @staticmethod
    def decode(raw: bytes) -> "RuleMessage":
        if len(raw) < HEADER_BYTES or (len(raw) - HEADER_BYTES) % ENTRY_BYTES:
            raise CodecError(f"rule payload of {len(raw)} bytes is not 8 + 13k")
        as_id = _unpack_id(raw[:HEADER_BYTES])
        rules = []
        for off in range(HEADER_BYTES, len(raw), ENTRY_BYTES):
            ip, mask = struct.unpack(">IB", raw[off:off + 5])
            rules.append((ip, mask, _unpack_id(raw[off + 5:off + ENTRY_BYTES])))
        return RuleMessage(as_id=as_id, rules=tuple(rules))


@dataclass
class InstalledRule:
    proposal: RuleProposal
    installed_at: float
    last_hit: float
    backlog_at_install: float
    state: str = STATE_ACTIVE

    @property
    def active(self) -> bool:
        return self.state == STATE_ACTIVE


def rule_lifecycle(now: float, rules, backlogs: BacklogView, safety_level: float = 0.1,
                   idle_timeout: float | None = None) -> list[InstalledRule]:
    """Expire rules whose local congestion dropped below the safety level
    (a fraction of the backlog seen at installation) or that sat idle too long."""
    out = []
    for r in rules:
        if not r.active:
            out.append(r)
            continue
        current = backlogs.get(r.proposal.owner_as, r.proposal.commodity)
        if current < safety_level * r.backlog_at_install:
            out.append(replace_state(r, STATE_EXPIRED))
        elif idle_timeout is not None and now - r.last_hit >= idle_timeout:
            out.append(replace_state(r, STATE_EXPIRED))
        else:
            out.append(r)
    return out


def replace_state(rule: InstalledRule, state: str) -> InstalledRule:
    return InstalledRule(proposal=rule.proposal, installed_at=rule.installed_at,
                         last_hit=rule.last_hit, backlog_at_install=rule.backlog_at_install,
                         state=state)


@dataclass(frozen=True)
class DriftBoundParams:
    """Coefficients of the quadratic drift bound alpha*T^2 - 2*beta*T."""
    alpha: float
    beta: float


def drift_bound(T: float, params: DriftBoundParams) -> float:
    if params.alpha <= 0:
        raise ValueError("alpha must be positive")
    return params.alpha * T * T - 2.0 * params.beta * T


def drift_roots(params: DriftBoundParams) -> tuple[float, float]:
    if params.alpha <= 0:
        raise ValueError("alpha must be positive")
    return 0.0, 2.0 * params.beta / params.alpha


def max_acceptable_T(params: DriftBoundParams, L_max: float) -> float:
    """Largest period whose drift bound stays within L_max (closed form)."""
    if params.alpha <= 0:
        raise ValueError("alpha must be positive")
    if L_max <= 0:
        raise ValueError("L_max must be positive")
    return (params.beta + math.sqrt(params.beta ** 2 + params.alpha * L_max)) / params.alpha


def drift_params_from_state(t: Topology, backlogs: BacklogView, rates: dict[tuple[str, str], float],
                            commodities: CommoditySpace) -> DriftBoundParams:
    """Build the quadratic coefficients from capacities, backlogs and mean rates.

    Capacities enter in bytes/second; per (node, commodity), the outgoing term
    is the aggregate permitted egress capacity and the incoming term the
    aggregate ingress capacity plus the mean production rate.
    """
    out_cap: dict[str, float] = {a: 0.0 for a in t.ases}
    in_cap: dict[str, float] = {a: 0.0 for a in t.ases}
    for l in t.links.values():
        if l.kind != "peering":
            continue
        out_cap[t.as_of_router(l.from_router)] += l.capacity_bps / 8.0
        in_cap[t.as_of_router(l.to_router)] += l.capacity_bps / 8.0
    alpha = beta = 0.0
    for n in sorted(t.ases):
        for c in commodities.ids:
            if commodities.host[c] == n:
                continue
            lam = rates.get((n, c), 0.0)
            alpha += out_cap[n] ** 2 + (in_cap[n] + lam) ** 2
            beta += backlogs.get(n, c) * (out_cap[n] - in_cap[n] - lam)
    return DriftBoundParams(alpha=alpha, beta=beta)


@dataclass
class ControllerConfig:
    period_s: float = 10.0
    variant: str = "fbpr"            # sbpr | fbpr
    stitch: str = "nhops"            # none | nhops | stitch
    alarm_level_bytes: float = 0.0
    stitch_timeout_s: float = 5.0
    stale_periods: int = 2


@dataclass
class TickResult:
    messages: list[RuleMessage]
    proposals: list[RuleProposal]
    report_bytes: int
    rule_bytes: int
    partial: bool = False


class Controller:
    """One logical actor: absorbs per-period congestion reports and answers
    with per-AS priority-rule messages derived by the configured algorithm.

    Holds the usable-link view: links referenced by rejected rules are
    excluded from derivation until explicitly re-enabled.
    """

    def __init__(self, t: Topology, dvr: RoutingTable, commodities: CommoditySpace,
                 config: ControllerConfig, deny: dict[str, set[str]] | None = None):
        self.topology = t
        self.dvr = dvr
        self.commodities = commodities
        self.config = config
        self.deny = deny or {}
        self.usable_links: set[str] = {l.link_id for l in t.peering_links()}
        self._all_links = set(self.usable_links)
        self._backlogs: dict[tuple[str, str], float] = {}
        self._last_seen: dict[tuple[str, str], float] = {}
        self._wire_to_commodity = {(rec.ip, rec.mask): c for c, rec in commodities.wire.items()}
        self._base_filter = peering_filter(t, deny=self.deny, commodities=commodities)

    def handle_rejection(self, as_id: str, link_id: str) -> None:
        self.usable_links.discard(link_id)

    def re_enable_link(self, link_id: str) -> None:
        if link_id in self._all_links:
            self.usable_links.add(link_id)

    def ingest(self, report: CongestionReport) -> bool:
        if report.as_id not in self.topology.ases:
            return False
        for ip, mask, load_gb in report.entries:
            c = self._wire_to_commodity.get((ip, mask))
            if c is None:
                continue
            self._backlogs[(report.as_id, c)] = load_gb * GIB
            self._last_seen[(report.as_id, c)] = report.timestamp
        return True

    def _expire_stale(self, now: float) -> None:
        horizon = self.config.stale_periods * self.config.period_s
        for key, seen in list(self._last_seen.items()):
            if now - seen > horizon:
                self._backlogs[key] = 0.0
                del self._last_seen[key]

    def backlog_view(self, now: float) -> BacklogView:
        return BacklogView(u=dict(self._backlogs), snapshot_time=now)

    def derive(self, now: float, forecasts: ForecastView) -> TickResult:
        view = self.backlog_view(now)
        cfg = self.config
        partial = False
        if cfg.stitch == "nhops":
            nf = nhops_filter(self.topology, self.dvr, deny=self.deny, commodities=self.commodities)
            fview = ForecastView.zero() if cfg.variant == "sbpr" else forecasts
            proposals = derive_proposals(view, fview, self.topology, nf, self.commodities,
                                         cfg.alarm_level_bytes, self.usable_links)
        elif cfg.stitch == "stitch":
            res = bp_dv_stitch(view, forecasts, self.topology, self.dvr,
                               timeout=cfg.stitch_timeout_s, nfilter=self._base_filter.copy(),
                               commodities=self.commodities, alarm_level=cfg.alarm_level_bytes,
                               usable_links=self.usable_links, sbpr_core=(cfg.variant == "sbpr"))
            proposals, partial = list(res.proposals), res.partial
        else:
            fview = ForecastView.zero() if cfg.variant == "sbpr" else forecasts
            proposals = derive_proposals(view, fview, self.topology, self._base_filter.copy(),
                                         self.commodities, cfg.alarm_level_bytes, self.usable_links)

        grouped: dict[str, list[tuple[int, int, str]]] = {}
        for p in sorted(proposals, key=RuleProposal.sort_key):
            rec = self.commodities.wire[p.commodity]
            grouped.setdefault(p.owner_as, []).append((rec.ip, rec.mask, p.via_link[:8]))
        messages = [RuleMessage(as_id=a, rules=tuple(grouped[a])) for a in sorted(grouped)]
        rule_bytes = sum(len(m.encode()) for m in messages)
        return TickResult(messages=messages, proposals=proposals,
                          report_bytes=0, rule_bytes=rule_bytes, partial=partial)

    def controller_tick(self, now: float, reports: list[CongestionReport],
                        forecasts: ForecastView | None = None,
                        rejection_callback=None) -> TickResult:
        """One actuation: ingest reports, expire stale state, derive and group rules.

        The rejection callback, when given, sees each message and returns link
        ids the AS refuses; those leave the usable set for subsequent ticks.
        """
        report_bytes = 0
        for rep in reports:
            if self.ingest(rep):
                report_bytes += len(rep.encode())
        self._expire_stale(now)
        result = self.derive(now, forecasts or ForecastView.zero())
        result.report_bytes = report_bytes
        if rejection_callback is not None:
            kept = []
            for msg in result.messages:
                rejected = set(rejection_callback(msg) or ())
                for lid in rejected:
                    self.handle_rejection(msg.as_id, lid)
                kept_rules = tuple(r for r in msg.rules if r[2] not in rejected)
                if kept_rules:
                    kept.append(RuleMessage(as_id=msg.as_id, rules=kept_rules))
            result.messages = kept
            result.proposals = [p for p in result.proposals
                                if p.via_link in self.usable_links]
        return result


def build_report(as_id: str, backlogs: dict[str, float], commodities: CommoditySpace,
                 timestamp: float, max_entries: int | None = None) -> CongestionReport:
    """Worst-case congestion report for one AS.

    At prefix granularity the report is fixed-size: the max_entries hottest
    destination prefixes, zero-padded deterministically when fewer are
    congested. Unbounded reports carry every nonzero backlog.
    """
    items = sorted(backlogs.items(), key=lambda kv: (-kv[1], kv[0]))
    entries: list[tuple[int, int, float]] = []
    if max_entries is None:
        for c, bytes_ in items:
            if bytes_ > 0:
                rec = commodities.wire[c]
                entries.append((rec.ip, rec.mask, bytes_ / GIB))
    else:
        chosen = [kv for kv in items if kv[1] > 0][:max_entries]
        used = {c for c, _ in chosen}
        for c, bytes_ in chosen:
            rec = commodities.wire[c]
            entries.append((rec.ip, rec.mask, bytes_ / GIB))
        if len(entries) < max_entries:
            for c in commodities.ids:
                if len(entries) == max_entries:
                    break
                if c in used or commodities.host[c] == as_id:
                    continue
                rec = commodities.wire[c]
                entries.append((rec.ip, rec.mask, 0.0))
    return CongestionReport(as_id=as_id, entries=tuple(entries), timestamp=timestamp)
