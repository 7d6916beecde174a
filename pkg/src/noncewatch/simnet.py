"""Deterministic simulated network standing in for live probing.

Each target owns a fixed router path.  A probe with hop limit k is seen
by hops 1..min(k, path length): it dies at hop k when k is within the
path (optionally drawing an ICMPv6 time-exceeded error), or reaches the
target when k exceeds it (optionally drawing a reply).  Monitors sit on
links at a given hop, sample what passes, and act later: reverse DNS
lookups, counter probes, passive-DNS sharing, or forward lookups of the
synthesized names.  All behavior is a pure function of (probes,
topology, seed); the clock is virtual, so identical runs produce
byte-identical capture, DNS, and feed outputs.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from ipaddress import AddressValueError, IPv6Address, IPv6Network
from pathlib import Path
from typing import Callable, Iterable

from .correlate import AsnTable
from .dnswire import (
    QTYPE_A,
    QTYPE_PTR,
    DnsQueryEvent,
    DnsService,
    ZoneConfig,
    address_to_reverse_name,
    build_query,
    synthesize_ptr_name,
)
from .nonces import MASK64
from .packets import (
    ICMP6_TIME_EXCEEDED,
    SendSummary,
    TCP_SYN,
    TsvLog,
    craft_echo,
    craft_icmpv6_error,
    craft_tcp,
    craft_udp,
    parse_frame,
    send_campaign,
)
from .pdns import PdnsRecord
from .scheduling import CampaignConfig, ProbeSpec

INITIAL_HOP_LIMITS = (32, 64, 255)
DELAY_KINDS = ("fixed", "uniform", "twopoint")
BEHAVIOR_KINDS = ("rdns", "counter_probe", "pdns", "fdns")
DEFAULT_COUNTER_PORTS = (80, 443)
DEFAULT_COUNTER_SRC_PORT = 20


class InvalidTopology(ValueError):
    pass


class VirtualClock:
    """Simulated seconds; sleeping is the only way time passes."""

    def __init__(self, start: float = 0.0):
        self._now = float(start)

    def now(self) -> float:
        return self._now

    def sleep(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("cannot sleep backwards")
        self._now += seconds


@dataclass(frozen=True)
class DelaySpec:
    """Reaction delay: fixed value, uniform range, or two-point mixture."""

    kind: str
    a: float
    b: float = 0.0
    p: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in DELAY_KINDS:
            raise InvalidTopology(f"unknown delay kind {self.kind!r}")
        if self.a < 0 or self.b < 0:
            raise InvalidTopology("delays must be >= 0")
        if self.kind == "uniform" and self.a > self.b:
            raise InvalidTopology("uniform delay needs a <= b")
        if self.kind == "twopoint" and not 0 <= self.p <= 1:
            raise InvalidTopology("twopoint probability must be in [0, 1]")

    def sample(self, rng: random.Random) -> float:
        if self.kind == "fixed":
            return self.a
        if self.kind == "uniform":
            return rng.uniform(self.a, self.b)
        return self.b if rng.random() < self.p else self.a

    def to_text(self) -> str:
        if self.kind == "fixed":
            return f"fixed {self.a:g}"
        if self.kind == "uniform":
            return f"uniform {self.a:g} {self.b:g}"
        return f"twopoint {self.a:g} {self.b:g} {self.p:g}"

    @classmethod
    def parse(cls, tokens: list[str]) -> "DelaySpec":
        if not tokens:
            raise InvalidTopology("missing delay")
        kind, args = tokens[0], tokens[1:]
        try:
            values = [float(v) for v in args]
        except ValueError as exc:
            raise InvalidTopology(f"bad delay value: {exc}") from None
        if kind == "fixed" and len(values) == 1:
            return cls("fixed", values[0])
        if kind == "uniform" and len(values) == 2:
            return cls("uniform", values[0], values[1])
        if kind == "twopoint" and len(values) == 3:
            return cls("twopoint", values[0], values[1], p=values[2])
        raise InvalidTopology(f"bad delay spec: {' '.join(tokens)!r}")


@dataclass(frozen=True)
class BehaviorSpec:
    """One thing a monitor does with an observed nonced address."""

    kind: str
    delay: DelaySpec
    client_addr: IPv6Address | None = None
    ports: tuple[int, ...] = DEFAULT_COUNTER_PORTS
    src_port: int = DEFAULT_COUNTER_SRC_PORT
    source_tag: str = ""

    def __post_init__(self) -> None:
        if self.kind not in BEHAVIOR_KINDS:
            raise InvalidTopology(f"unknown behavior {self.kind!r}")
        if self.kind != "pdns" and self.client_addr is None:
            raise InvalidTopology(f"{self.kind} behavior needs a client address")
        if self.kind == "counter_probe" and not self.ports:
            raise InvalidTopology("counter_probe needs at least one port")


@dataclass(frozen=True)
class MonitorSpec:
    """Passive watcher on the link into a given hop."""

    name: str
    attach_hop: int
    asn: int
    sample_rate: float
    behaviors: tuple[BehaviorSpec, ...]
    observe_responses: bool = False

    def __post_init__(self) -> None:
        if self.attach_hop < 1:
            raise InvalidTopology(f"monitor {self.name}: attach_hop must be >= 1")
        if not 0 <= self.sample_rate <= 1:
            raise InvalidTopology(f"monitor {self.name}: sample_rate not in [0, 1]")
        if not self.behaviors:
            raise InvalidTopology(f"monitor {self.name}: no behaviors")

    @property
    def acting_addrs(self) -> frozenset[IPv6Address]:
        return frozenset(b.client_addr for b in self.behaviors
                         if b.client_addr is not None)


@dataclass(frozen=True)
class HopSpec:
    address: IPv6Address
    asn: int
    latency_ms: float = 0.0
    responds: bool = True
    initial_hop_limit: int = 64

    def __post_init__(self) -> None:
        if self.latency_ms < 0:
            raise InvalidTopology(f"hop {self.address}: negative latency")
        if self.initial_hop_limit not in INITIAL_HOP_LIMITS:
            raise InvalidTopology(
                f"hop {self.address}: initial hop limit must be one of "
                f"{INITIAL_HOP_LIMITS}")


@dataclass(frozen=True)
class TargetSpec:
    address: IPv6Address
    asn: int
    path: tuple[HopSpec, ...]
    monitors: tuple[MonitorSpec, ...] = ()
    udp_responsive: bool = False
    echo_responsive: bool = False
    initial_hop_limit: int = 64

    def __post_init__(self) -> None:
        if not self.path:
            raise InvalidTopology(f"target {self.address}: empty path")
        if self.initial_hop_limit not in INITIAL_HOP_LIMITS:
            raise InvalidTopology(
                f"target {self.address}: initial hop limit must be one of "
                f"{INITIAL_HOP_LIMITS}")
        if self.initial_hop_limit <= len(self.path):
            raise InvalidTopology(
                f"target {self.address}: initial hop limit would not survive "
                f"{len(self.path)} hops")
        for position, hop in enumerate(self.path):
            if hop.initial_hop_limit - position < 1:
                raise InvalidTopology(
                    f"hop {hop.address}: initial hop limit too small for "
                    f"position {position + 1}")
        for monitor in self.monitors:
            if monitor.attach_hop > len(self.path):
                raise InvalidTopology(
                    f"monitor {monitor.name}: attach_hop {monitor.attach_hop} "
                    f"beyond path of {len(self.path)} hops")

    def one_way_s(self, hop: int) -> float:
        """Cumulative latency from source to hop (1-based), in seconds."""
        total = 0.0
        for spec in self.path[:hop]:
            total += spec.latency_ms / 1000.0
        return total


@dataclass(frozen=True)
class MonitorTruth:
    name: str
    target: IPv6Address
    attach_hop: int
    asn: int
    acting_addrs: frozenset[IPv6Address]
    source_tags: frozenset[str]


@dataclass(frozen=True)
class Topology:
    targets: tuple[TargetSpec, ...]

    def __post_init__(self) -> None:
        addrs = [t.address for t in self.targets]
        if len(set(addrs)) != len(addrs):
            raise InvalidTopology("duplicate target address")
        names = [m.name for t in self.targets for m in t.monitors]
        if len(set(names)) != len(names):
            raise InvalidTopology("duplicate monitor name")

    def target_for(self, addr: IPv6Address) -> TargetSpec | None:
        for target in self.targets:
            if target.address == addr:
                return target
        return None

    def ground_truth(self) -> dict[str, MonitorTruth]:
        truth: dict[str, MonitorTruth] = {}
        for target in self.targets:
            for monitor in target.monitors:
                tags = frozenset(b.source_tag or monitor.name
                                 for b in monitor.behaviors if b.kind == "pdns")
                truth[monitor.name] = MonitorTruth(
                    monitor.name, target.address, monitor.attach_hop,
                    monitor.asn, monitor.acting_addrs, tags)
        return truth

    def asn_table(self) -> AsnTable:
        """Host routes for every address the topology can emit from."""
        entries: dict[IPv6Address, int] = {}

        def put(addr: IPv6Address, asn: int) -> None:
            if entries.setdefault(addr, asn) != asn:
                raise InvalidTopology(f"{addr} appears in two ASNs")

        for target in self.targets:
            put(target.address, target.asn)
            for hop in target.path:
                put(hop.address, hop.asn)
            for monitor in target.monitors:
                for addr in monitor.acting_addrs:
                    put(addr, monitor.asn)
        table = AsnTable()
        for addr, asn in sorted(entries.items()):
            table.add(IPv6Network((addr, 128)), asn)
        return table

    def to_text(self) -> str:
        lines: list[str] = []
        for target in self.targets:
            lines.append(
                f"target {target.address} asn {target.asn}"
                f" udp {'yes' if target.udp_responsive else 'no'}"
                f" echo {'yes' if target.echo_responsive else 'no'}"
                f" initial_hl {target.initial_hop_limit}")
            for hop in target.path:
                lines.append(
                    f"hop {hop.address} asn {hop.asn}"
                    f" latency_ms {hop.latency_ms:g}"
                    f" responds {'yes' if hop.responds else 'no'}"
                    f" initial_hl {hop.initial_hop_limit}")
            for monitor in target.monitors:
                lines.append(
                    f"monitor {monitor.name} hop {monitor.attach_hop}"
                    f" asn {monitor.asn} sample {monitor.sample_rate:g}"
                    f" observe_responses"
                    f" {'yes' if monitor.observe_responses else 'no'}")
                for b in monitor.behaviors:
                    if b.kind == "pdns":
                        detail = f"tag {b.source_tag}" if b.source_tag else ""
                    elif b.kind == "counter_probe":
                        ports = ",".join(str(p) for p in b.ports)
                        detail = (f"source {b.client_addr} ports {ports}"
                                  f" src_port {b.src_port}")
                    else:
                        detail = f"client {b.client_addr}"
                    parts = ["behavior", b.kind]
                    if detail:
                        parts.append(detail)
                    parts.append(f"delay {b.delay.to_text()}")
                    lines.append(" ".join(parts))
            lines.append("")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# topology text format

_BOOL = {"yes": True, "no": False, "true": True, "false": False,
         "1": True, "0": False}


def _pairs(tokens: list[str], where: str) -> dict[str, str]:
    if len(tokens) % 2:
        raise InvalidTopology(f"{where}: dangling key {tokens[-1]!r}")
    return dict(zip(tokens[::2], tokens[1::2]))


def _addr(text: str, where: str) -> IPv6Address:
    try:
        return IPv6Address(text)
    except AddressValueError:
        raise InvalidTopology(f"{where}: bad address {text!r}") from None


def _intval(text: str, where: str, what: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise InvalidTopology(f"{where}: bad {what} {text!r}") from None


def _boolval(text: str, where: str) -> bool:
    try:
        return _BOOL[text.lower()]
    except KeyError:
        raise InvalidTopology(f"{where}: bad boolean {text!r}") from None


def parse_topology(text: str, origin: str = "<topology>") -> Topology:
    targets: list[TargetSpec] = []
    cur_target: dict | None = None
    cur_monitor: dict | None = None

    def close_monitor() -> None:
        nonlocal cur_monitor
        if cur_monitor is None:
            return
        where = cur_monitor.pop("where")
        try:
            cur_target["monitors"].append(
                MonitorSpec(behaviors=tuple(cur_monitor.pop("behaviors")),
                            **cur_monitor))
        except InvalidTopology as exc:
            raise InvalidTopology(f"{where}: {exc}") from None
        cur_monitor = None

    def close_target() -> None:
        nonlocal cur_target
        close_monitor()
        if cur_target is None:
            return
        where = cur_target.pop("where")
        try:
            targets.append(TargetSpec(path=tuple(cur_target.pop("path")),
                                      monitors=tuple(cur_target.pop("monitors")),
                                      **cur_target))
        except InvalidTopology as exc:
            raise InvalidTopology(f"{where}: {exc}") from None
        cur_target = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{origin}:{lineno}"
        tokens = line.split()
        keyword, rest = tokens[0], tokens[1:]

        if keyword == "target":
            close_target()
            if not rest:
                raise InvalidTopology(f"{where}: target needs an address")
            opts = _pairs(rest[1:], where)
            cur_target = {
                "where": where,
                "address": _addr(rest[0], where),
                "asn": _intval(opts.pop("asn", "0"), where, "asn"),
                "udp_responsive": _boolval(opts.pop("udp", "no"), where),
                "echo_responsive": _boolval(opts.pop("echo", "no"), where),
                "initial_hop_limit": _intval(opts.pop("initial_hl", "64"),
                                             where, "initial_hl"),
                "path": [],
                "monitors": [],
            }
            if opts:
                raise InvalidTopology(f"{where}: unknown keys {sorted(opts)}")
        elif keyword == "hop":
            if cur_target is None:
                raise InvalidTopology(f"{where}: hop before any target")
            close_monitor()
            if not rest:
                raise InvalidTopology(f"{where}: hop needs an address")
            opts = _pairs(rest[1:], where)
            try:
                hop = HopSpec(
                    address=_addr(rest[0], where),
                    asn=_intval(opts.pop("asn", "0"), where, "asn"),
                    latency_ms=float(opts.pop("latency_ms", "0")),
                    responds=_boolval(opts.pop("responds", "yes"), where),
                    initial_hop_limit=_intval(opts.pop("initial_hl", "64"),
                                              where, "initial_hl"))
            except InvalidTopology as exc:
                raise InvalidTopology(f"{where}: {exc}") from None
            except ValueError as exc:
                raise InvalidTopology(f"{where}: {exc}") from None
            if opts:
                raise InvalidTopology(f"{where}: unknown keys {sorted(opts)}")
            cur_target["path"].append(hop)
        elif keyword == "monitor":
            if cur_target is None:
                raise InvalidTopology(f"{where}: monitor before any target")
            close_monitor()
            if not rest:
                raise InvalidTopology(f"{where}: monitor needs a name")
            opts = _pairs(rest[1:], where)
            try:
                sample = float(opts.pop("sample", "1.0"))
            except ValueError:
                raise InvalidTopology(f"{where}: bad sample rate") from None
            cur_monitor = {
                "where": where,
                "name": rest[0],
                "attach_hop": _intval(opts.pop("hop", "1"), where, "hop"),
                "asn": _intval(opts.pop("asn", "0"), where, "asn"),
                "sample_rate": sample,
                "observe_responses": _boolval(
                    opts.pop("observe_responses", "no"), where),
                "behaviors": [],
            }
            if opts:
                raise InvalidTopology(f"{where}: unknown keys {sorted(opts)}")
        elif keyword == "behavior":
            if cur_monitor is None:
                raise InvalidTopology(f"{where}: behavior before any monitor")
            if not rest:
                raise InvalidTopology(f"{where}: behavior needs a kind")
            kind = rest[0]
            tail = rest[1:]
            if "delay" not in tail:
                raise InvalidTopology(f"{where}: behavior needs a delay")
            split = tail.index("delay")
            opts = _pairs(tail[:split], where)
            delay = DelaySpec.parse(tail[split + 1:])
            client = opts.pop("client", None) or opts.pop("source", None)
            ports_text = opts.pop("ports", None) or opts.pop("port", None)
            try:
                behavior = BehaviorSpec(
                    kind=kind,
                    delay=delay,
                    client_addr=_addr(client, where) if client else None,
                    ports=tuple(int(p) for p in ports_text.split(","))
                    if ports_text else DEFAULT_COUNTER_PORTS,
                    src_port=_intval(opts.pop("src_port",
                                              str(DEFAULT_COUNTER_SRC_PORT)),
                                     where, "src_port"),
                    source_tag=opts.pop("tag", ""))
            except InvalidTopology as exc:
                raise InvalidTopology(f"{where}: {exc}") from None
            except ValueError as exc:
                raise InvalidTopology(f"{where}: {exc}") from None
            if opts:
                raise InvalidTopology(f"{where}: unknown keys {sorted(opts)}")
            cur_monitor["behaviors"].append(behavior)
        else:
            raise InvalidTopology(f"{where}: unknown keyword {keyword!r}")
    close_target()
    if not targets:
        raise InvalidTopology(f"{origin}: no targets")
    return Topology(tuple(targets))


def read_topology(path: str | Path) -> Topology:
    path = Path(path)
    return parse_topology(path.read_text(), origin=str(path))


# ---------------------------------------------------------------------------
# the network

@dataclass
class SimStats:
    probes_seen: int = 0
    probes_lost: int = 0
    observations: int = 0
    reactions: int = 0
    responses: int = 0


class SimNetwork:
    """Transport that computes every consequence of each probe at once.

    Plug into send_campaign as the transport, with .clock as the campaign
    clock; afterwards finalize() orders the accumulated consequence
    streams by virtual time.
    """

    def __init__(self, topology: Topology, zone: ZoneConfig, key, plan,
                 high_water: int | Callable[[], int], seed: int,
                 clock: VirtualClock | None = None):
        self.topology = topology
        self.clock = clock or VirtualClock()
        self.rng = random.Random(seed)
        self.dns = DnsService(zone, key, plan, high_water)
        self.zone = zone
        self.stats = SimStats()
        self._seq = 0
        self._capture: list[tuple[float, int, bytes]] = []
        self._queries: list[tuple[float, int, IPv6Address, bytes]] = []
        self._feed: list[tuple[float, int, PdnsRecord]] = []

    # -- transport interface -------------------------------------------------

    def send(self, wire: bytes) -> None:
        now = self.clock.now()
        probe = parse_frame(wire)
        self.stats.probes_seen += 1
        target = self.topology.target_for(probe.dst)
        if target is None:
            self.stats.probes_lost += 1
            return
        ttl = probe.hop_limit
        length = len(target.path)
        nonced = probe.src

        for hop_index in range(1, min(ttl, length) + 1):
            for monitor in target.monitors:
                if monitor.attach_hop == hop_index:
                    self._observe(monitor, target, nonced,
                                  now + target.one_way_s(hop_index))

        if ttl <= length:
            hop = target.path[ttl - 1]
            if hop.responds:
                rtt = 2.0 * target.one_way_s(ttl)
                arrived = hop.initial_hop_limit - (ttl - 1)
                reply = craft_icmpv6_error(hop.address, nonced,
                                           ICMP6_TIME_EXCEEDED, 0, wire,
                                           hop_limit=arrived)
                self._deliver(now + rtt, reply)
                self._observe_response(target, nonced, ttl, now)
            return

        rtt = 2.0 * target.one_way_s(length)
        arrived = target.initial_hop_limit - length
        if probe.protocol == "udp" and target.udp_responsive:
            reply = craft_udp(target.address, nonced, probe.dst_port,
                              probe.src_port, b"", hop_limit=arrived)
            self._deliver(now + rtt, reply)
            self._observe_response(target, nonced, length + 1, now)
        elif probe.protocol == "icmpv6" and target.echo_responsive:
            reply = craft_echo(target.address, nonced, probe.echo_ident or 0,
                               probe.echo_seq or 0, probe.payload,
                               hop_limit=arrived, reply=True)
            self._deliver(now + rtt, reply)
            self._observe_response(target, nonced, length + 1, now)

    def close(self) -> None:
        pass

    # -- consequences --------------------------------------------------------

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def _deliver(self, when: float, wire: bytes) -> None:
        self.stats.responses += 1
        self._capture.append((when, self._next_seq(), wire))

    def _observe_response(self, target: TargetSpec, nonced: IPv6Address,
                          from_hop: int, sent_at: float) -> None:
        """Watchers on the return path may glean the address from replies."""
        for monitor in target.monitors:
            if not monitor.observe_responses:
                continue
            if monitor.attach_hop >= from_hop:
                continue
            back = (target.one_way_s(min(from_hop, len(target.path)))
                    - target.one_way_s(monitor.attach_hop))
            when = sent_at + target.one_way_s(min(from_hop, len(target.path))) + back
            self._observe(monitor, target, nonced, when)

    def _observe(self, monitor: MonitorSpec, target: TargetSpec,
                 nonced: IPv6Address, when: float) -> None:
        self.stats.observations += 1
        if self.rng.random() >= monitor.sample_rate:
            return
        self.stats.reactions += 1
        return_s = target.one_way_s(monitor.attach_hop)
        for behavior in monitor.behaviors:
            if behavior.kind == "rdns":
                at = when + behavior.delay.sample(self.rng)
                query = build_query(self.rng.getrandbits(16),
                                    address_to_reverse_name(nonced), QTYPE_PTR)
                self._queries.append((at, self._next_seq(),
                                      behavior.client_addr, query))
            elif behavior.kind == "fdns":
                at = when + behavior.delay.sample(self.rng)
                name = synthesize_ptr_name(int(nonced) & MASK64, self.zone)
                query = build_query(self.rng.getrandbits(16), name, QTYPE_A)
                self._queries.append((at, self._next_seq(),
                                      behavior.client_addr, query))
            elif behavior.kind == "counter_probe":
                for port in behavior.ports:
                    at = when + behavior.delay.sample(self.rng)
                    syn = craft_tcp(behavior.client_addr, nonced,
                                    behavior.src_port, port, TCP_SYN,
                                    hop_limit=64 - monitor.attach_hop,
                                    seq=self.rng.getrandbits(32))
                    self._capture.append((at + return_s, self._next_seq(), syn))
            elif behavior.kind == "pdns":
                at = when + behavior.delay.sample(self.rng)
                name = address_to_reverse_name(nonced)
                self._feed.append((at, self._next_seq(), PdnsRecord(
                    rrname=name,
                    rrtype="PTR",
                    rdata=synthesize_ptr_name(int(nonced) & MASK64, self.zone),
                    time_first=at,
                    time_last=at,
                    source_tag=behavior.source_tag or monitor.name)))

    # -- output --------------------------------------------------------------

    def capture_snapshot(self) -> list[tuple[float, bytes]]:
        """Frames accumulated so far, ordered; lets a sender react mid-campaign."""
        return [(when, wire)
                for when, _, wire in sorted(self._capture,
                                            key=lambda e: (e[0], e[1]))]

    def finalize(self) -> "SimResult":
        """Order every stream by virtual time and answer the DNS queries."""
        frames = [(when, wire)
                  for when, _, wire in sorted(self._capture,
                                              key=lambda e: (e[0], e[1]))]
        for when, _, client, query in sorted(self._queries,
                                             key=lambda e: (e[0], e[1])):
            self.dns.handle_datagram(query, client, now=when)
        records = [record
                   for when, _, record in sorted(self._feed,
                                                 key=lambda e: (e[0], e[1]))]
        return SimResult(frames=frames, dns_events=list(self.dns.events),
                         pdns_records=records, stats=self.stats)


@dataclass
class SimResult:
    frames: list[tuple[float, bytes]]
    dns_events: list[DnsQueryEvent]
    pdns_records: list[PdnsRecord]
    stats: SimStats
    send_summary: SendSummary | None = None


def run_simulation(specs: Iterable[ProbeSpec], config: CampaignConfig,
                   topology: Topology, zone: ZoneConfig, seed: int,
                   sink: TsvLog, clock: VirtualClock | None = None) -> SimResult:
    """Pace a whole campaign through the simulated network."""
    specs = list(specs)
    high_water = 1 + max((s.sequence_index for s in specs), default=-1)
    network = SimNetwork(topology, zone, config.key, config.plan,
                         high_water=high_water, seed=seed, clock=clock)
    summary = send_campaign(specs, config, network, sink, clock=network.clock)
    result = network.finalize()
    result.send_summary = summary
    return result


# ---------------------------------------------------------------------------
# generated topologies

_TRANSIT_ASNS = (64496, 64497, 64498, 64499, 65536, 65537, 65538, 65539)
_WATCHER_ASNS = (15169, 13335, 16509, 8075, 14061)


def random_topology(seed: int, targets: int = 6, max_ttl: int = 12,
                    monitors_per_target: tuple[int, int] = (0, 2),
                    rdns_only: bool = False) -> Topology:
    """Seeded topology with paths, latencies, and monitor placements.

    Monitors always carry an rdns behavior with a distinct client address
    and full sampling, so localization against ground truth is exact.
    """
    rng = random.Random(seed)
    specs: list[TargetSpec] = []
    client_serial = 0
    for index in range(targets):
        target_asn = 64500 + index
        address = IPv6Address(f"2001:db8:{0x1000 + index:x}::1")
        length = rng.randint(4, 12)
        dest_hops = rng.randint(0, min(2, length - 1))
        path = []
        for hop in range(1, length + 1):
            in_dest = hop > length - dest_hops
            path.append(HopSpec(
                address=IPv6Address(f"2001:db8:{0x2000 + index:x}::{hop:x}"),
                asn=target_asn if in_dest else rng.choice(_TRANSIT_ASNS),
                latency_ms=round(rng.uniform(0.05, 15.0), 3),
                responds=rng.random() < 0.8,
                initial_hop_limit=rng.choice(INITIAL_HOP_LIMITS)))
        monitor_specs = []
        for _ in range(rng.randint(*monitors_per_target)):
            attach = rng.randint(1, min(length, max_ttl))
            third_party = rng.random() < 0.5
            asn = rng.choice(_WATCHER_ASNS) if third_party else target_asn
            client_serial += 1
            client = IPv6Address(f"2001:db8:3000::{client_serial:x}")
            behaviors = [BehaviorSpec("rdns", DelaySpec("fixed", rng.randint(30, 900)),
                                      client_addr=client)]
            if not rdns_only and rng.random() < 0.4:
                client_serial += 1
                behaviors.append(BehaviorSpec(
                    "counter_probe",
                    DelaySpec("fixed", rng.randint(300, 1200)),
                    client_addr=IPv6Address(f"2001:db8:3000::{client_serial:x}"),
                    ports=(80, 443)))
            if not rdns_only and rng.random() < 0.4:
                behaviors.append(BehaviorSpec(
                    "pdns",
                    DelaySpec("twopoint", 3600, 18 * 86400, p=0.25),
                    source_tag=f"feed{index}"))
            if not rdns_only and rng.random() < 0.3:
                client_serial += 1
                behaviors.append(BehaviorSpec(
                    "fdns", DelaySpec("fixed", rng.randint(600, 1800)),
                    client_addr=IPv6Address(f"2001:db8:3000::{client_serial:x}")))
            monitor_specs.append(MonitorSpec(
                name=f"m{index}_{attach}_{client_serial}",
                attach_hop=attach, asn=asn, sample_rate=1.0,
                behaviors=tuple(behaviors)))
        specs.append(TargetSpec(
            address=address, asn=target_asn, path=tuple(path),
            monitors=tuple(monitor_specs),
            udp_responsive=rng.random() < 0.5,
            echo_responsive=rng.random() < 0.5,
            initial_hop_limit=rng.choice(INITIAL_HOP_LIMITS)))
    return Topology(tuple(specs))
