"""Join transmissions with reactions and derive localization bounds.

Every reaction references a nonce; the transmission log says when that
nonce left, toward whom, and with what hop limit.  The join therefore
bounds each observer's distance (the probe's ttl), attributes peers to
origin ASNs, infers how far a responder's reply travelled from its
arrival hop limit, and converts response delays into speed-of-light
distance bounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from ipaddress import IPv6Address, IPv6Network
from pathlib import Path
from typing import Iterable, Sequence

from .detect import DetectionEvent, DetectionType, ResponseKind, TraceResponse
from .packets import TransmissionRecord

ASSUMED_INITIAL_HOP_LIMITS = (32, 64, 255)
KM_PER_RTT_MS = 100.0


class NoDetectionsError(ValueError):
    pass


class AsnTableError(ValueError):
    pass


class AsnTable:
    """Longest-prefix-match IPv6 prefix -> origin ASN."""

    def __init__(self) -> None:
        self._by_len: dict[int, dict[int, int]] = {}

    def add(self, network: IPv6Network, asn: int) -> None:
        bits = self._by_len.setdefault(network.prefixlen, {})
        key = int(network.network_address) >> (128 - network.prefixlen) \
            if network.prefixlen else 0
        if key in bits:
            raise AsnTableError(f"duplicate prefix {network}")
        bits[key] = asn

    @classmethod
    def from_lines(cls, lines: Iterable[str], origin: str = "<asn table>") -> "AsnTable":
        table = cls()
        for lineno, raw in enumerate(lines, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                prefix_text, asn_text = line.split()
                table.add(IPv6Network(prefix_text), int(asn_text))
            except AsnTableError:
                raise
            except ValueError:
                raise AsnTableError(
                    f"{origin}:{lineno}: expected 'prefix/len asn': {line!r}") from None
        return table

    @classmethod
    def from_file(cls, path: str | Path) -> "AsnTable":
        return cls.from_lines(Path(path).read_text().splitlines(), str(path))

    @property
    def prefix_lengths(self) -> list[int]:
        return sorted(self._by_len, reverse=True)

    def entries(self) -> list[tuple[IPv6Network, int]]:
        out = []
        for plen, routes in sorted(self._by_len.items()):
            for key, asn in sorted(routes.items()):
                address = key << (128 - plen) if plen else 0
                out.append((IPv6Network((address, plen)), asn))
        return out

    def to_lines(self) -> str:
        return "".join(f"{net} {asn}\n" for net, asn in self.entries())

    def lookup(self, addr: IPv6Address) -> int | None:
        value = int(addr)
        for plen in self.prefix_lengths:
            key = value >> (128 - plen) if plen else 0
            asn = self._by_len[plen].get(key)
            if asn is not None:
                return asn
        return None


@dataclass
class AttributedDetection:
    event: DetectionEvent
    delta_time: float
    peer_asn: int | None = None
    diff_asn: bool | None = None


@dataclass
class DetectionJoin:
    nonce: int
    tx: TransmissionRecord
    detections: list[AttributedDetection] = field(default_factory=list)
    trace_responses: list[TraceResponse] = field(default_factory=list)
    target_asn: int | None = None


@dataclass
class JoinResult:
    joins: list[DetectionJoin]
    unknown_detections: list[DetectionEvent] = field(default_factory=list)
    unknown_responses: list[TraceResponse] = field(default_factory=list)
    negative_delta_detections: list[DetectionEvent] = field(default_factory=list)


def join(tx_records: Sequence[TransmissionRecord],
         detections: Sequence[DetectionEvent],
         responses: Sequence[TraceResponse] = ()) -> JoinResult:
    """Group reactions under the transmission that disseminated their nonce.

    A join exists for every nonce that drew at least one reaction;
    silent transmissions are omitted.  Reactions whose nonce never
    appears in the transmission log are anomalies, not joins.
    """
    by_nonce = {record.nonce: record for record in tx_records}
    result = JoinResult(joins=[])
    joins: dict[int, DetectionJoin] = {}

    def join_for(nonce: int) -> DetectionJoin:
        if nonce not in joins:
            joins[nonce] = DetectionJoin(nonce, by_nonce[nonce])
        return joins[nonce]

    for event in detections:
        tx = by_nonce.get(event.nonce)
        if tx is None:
            result.unknown_detections.append(event)
            continue
        delta = event.timestamp - tx.timestamp
        if delta < 0:
            result.negative_delta_detections.append(event)
            continue
        join_for(event.nonce).detections.append(AttributedDetection(event, delta))
    for response in responses:
        if response.nonce not in by_nonce:
            result.unknown_responses.append(response)
            continue
        join_for(response.nonce).trace_responses.append(response)

    for item in joins.values():
        item.detections.sort(key=lambda d: d.event.timestamp)
        item.trace_responses.sort(key=lambda r: r.timestamp)
    result.joins = sorted(joins.values(),
                          key=lambda j: (j.tx.timestamp, j.nonce))
    return result


def ttl_bound(item: DetectionJoin) -> int:
    """Hop-count upper bound on where the probe was observed."""
    if not item.detections:
        raise NoDetectionsError(f"nonce {item.nonce:016x} drew no detections")
    return item.tx.ttl


def asn_attribution(item: DetectionJoin, table: AsnTable) -> DetectionJoin:
    """Fill target/peer origin ASNs and the differs-from-target flags."""
    item.target_asn = table.lookup(item.tx.dst_addr)
    for detection in item.detections:
        peer = detection.event.peer_addr
        if peer is None:
            detection.peer_asn = None
            detection.diff_asn = None
            continue
        detection.peer_asn = table.lookup(peer)
        if detection.peer_asn is None or item.target_asn is None:
            detection.diff_asn = None
        else:
            detection.diff_asn = detection.peer_asn != item.target_asn
    return item


def attribute_all(joins: Iterable[DetectionJoin], table: AsnTable) -> list[DetectionJoin]:
    return [asn_attribution(item, table) for item in joins]


def infer_hops_traversed(arrived_hop_limit: int) -> tuple[int, int]:
    """Assumed initial hop limit and hops a reply travelled to reach us."""
    if not 0 < arrived_hop_limit <= 255:
        raise ValueError(f"hop limit out of range: {arrived_hop_limit}")
    for initial in ASSUMED_INITIAL_HOP_LIMITS:
        if initial >= arrived_hop_limit:
            return initial, initial - arrived_hop_limit
    raise AssertionError("unreachable")


def rtt_distance_bound(rtt_ms: float) -> float:
    """Farthest a responder can sit, in km, given a round-trip time."""
    if rtt_ms < 0:
        raise ValueError("negative rtt")
    return rtt_ms * KM_PER_RTT_MS


@dataclass
class EavesdropCandidate:
    join: DetectionJoin
    flagged_peers: list[tuple[IPv6Address, int]]
    evidence: list[str]

    @property
    def bound(self) -> int:
        return self.join.tx.ttl


def _response_evidence(item: DetectionJoin) -> list[str]:
    notes = []
    for response in item.trace_responses:
        initial, hops = infer_hops_traversed(response.arrived_hop_limit)
        rtt_ms = (response.timestamp - item.tx.timestamp) * 1000.0
        distance = rtt_distance_bound(max(rtt_ms, 0.0))
        notes.append(
            f"responder {response.responder_addr}: arrived hop limit "
            f"{response.arrived_hop_limit}, assumed initial {initial}, "
            f"{hops} hops traversed; reply after {rtt_ms:.4g} ms "
            f"-> within {distance:.4g} km")
    return notes


def eavesdrop_candidates(joins: Iterable[DetectionJoin], table: AsnTable,
                         ttl_threshold: int = 4,
                         source_asn: int | None = None) -> list[EavesdropCandidate]:
    """Joins whose reactions came from mid-path, third-party networks.

    A join qualifies when its probe's ttl is at or under the threshold
    and some peer's origin ASN matches neither the target's nor ours.
    """
    candidates = []
    for item in joins:
        if not item.detections or item.tx.ttl > ttl_threshold:
            continue
        if item.target_asn is None and item.detections:
            asn_attribution(item, table)
        flagged = []
        for detection in item.detections:
            asn = detection.peer_asn
            if asn is None or asn == item.target_asn:
                continue
            if source_asn is not None and asn == source_asn:
                continue
            flagged.append((detection.event.peer_addr, asn))
        if flagged:
            candidates.append(EavesdropCandidate(item, flagged,
                                                 _response_evidence(item)))
    return candidates


@dataclass
class ExperimentSummary:
    probes_sent: int = 0
    targets_probed: int = 0
    traces_with_detection: int = 0
    counts: dict[str, int] = field(default_factory=dict)
    unique_peers: dict[str, int] = field(default_factory=dict)
    delta_samples: dict[str, list[float]] = field(default_factory=dict)
    ttl_samples: dict[str, list[int]] = field(default_factory=dict)
    diff_asn_counts: dict[str, int] = field(default_factory=dict)
    known_asn_counts: dict[str, int] = field(default_factory=dict)
    top_rdns_asns: list[tuple[int, int]] = field(default_factory=list)
    anomalies: int = 0

    def diff_asn_fraction(self, dtype: str) -> float | None:
        known = self.known_asn_counts.get(dtype, 0)
        if known == 0:
            return None
        return self.diff_asn_counts.get(dtype, 0) / known


def summarize(joins: Sequence[DetectionJoin],
              tx_records: Sequence[TransmissionRecord] = (),
              anomalies: int = 0, top_n: int = 10) -> ExperimentSummary:
    """Counts, sample vectors, and diff-ASN tallies over attributed joins."""
    summary = ExperimentSummary(anomalies=anomalies)
    summary.probes_sent = len(tx_records)
    summary.targets_probed = len({r.dst_addr for r in tx_records})
    detected_targets = set()
    peers: dict[str, set[IPv6Address]] = {}
    rdns_peer_asn: dict[IPv6Address, int] = {}
    for dtype in DetectionType:
        summary.counts[dtype.value] = 0
        summary.unique_peers[dtype.value] = 0
        summary.delta_samples[dtype.value] = []
        summary.ttl_samples[dtype.value] = []
        summary.diff_asn_counts[dtype.value] = 0
        summary.known_asn_counts[dtype.value] = 0
        peers[dtype.value] = set()
    for item in joins:
        if item.detections:
            detected_targets.add(item.tx.dst_addr)
        for detection in item.detections:
            dtype = detection.event.dtype.value
            summary.counts[dtype] += 1
            summary.delta_samples[dtype].append(detection.delta_time)
            summary.ttl_samples[dtype].append(item.tx.ttl)
            if detection.event.peer_addr is not None:
                peers[dtype].add(detection.event.peer_addr)
            if detection.diff_asn is not None:
                summary.known_asn_counts[dtype] += 1
                if detection.diff_asn:
                    summary.diff_asn_counts[dtype] += 1
            if (detection.event.dtype is DetectionType.RDNS
                    and detection.event.peer_addr is not None
                    and detection.peer_asn is not None):
                rdns_peer_asn[detection.event.peer_addr] = detection.peer_asn
    summary.traces_with_detection = len(detected_targets)
    for dtype, addresses in peers.items():
        summary.unique_peers[dtype] = len(addresses)
    asn_counts: dict[int, int] = {}
    for asn in rdns_peer_asn.values():
        asn_counts[asn] = asn_counts.get(asn, 0) + 1
    summary.top_rdns_asns = sorted(
        ((count, asn) for asn, count in asn_counts.items()),
        key=lambda pair: (-pair[0], pair[1]))[:top_n]
    return summary


# ---------------------------------------------------------------------------
# timelines

def format_delta(seconds: float) -> str:
    """Humanize a delay: sub-second decimals, else two coarsest units."""
    if seconds < 0:
        raise ValueError("negative delta")
    if seconds < 1.0:
        if seconds == 0:
            return "0s"
        return f"{seconds:.6f}".rstrip("0").rstrip(".") + "s"
    total = round(seconds)
    days, rest = divmod(total, 86400)
    hours, rest = divmod(rest, 3600)
    minutes, secs = divmod(rest, 60)
    parts = [(days, "d"), (hours, "h"), (minutes, "m"), (secs, "s")]
    first = next(i for i, (value, _) in enumerate(parts) if value)
    chosen = [parts[first]]
    for value, unit in parts[first + 1:]:
        if value:
            chosen.append((value, unit))
            break
    return " ".join(f"{value}{unit}" for value, unit in chosen)


_RESPONSE_TEXT = {
    ResponseKind.HOP_LIMIT_EXCEEDED: "tr hop response",
    ResponseKind.ECHO_REPLY: "tr target response",
    ResponseKind.DIRECT_REPLY: "tr target response",
    ResponseKind.DEST_UNREACHABLE: "tr dest unreachable response",
    ResponseKind.OTHER_ICMP_ERROR: "tr icmp response",
}


@dataclass(frozen=True)
class TimelineRow:
    timestamp: float
    delta_s: float
    text: str
    ttl: int
    flagged: bool

    @property
    def delta(self) -> str:
        return format_delta(self.delta_s)


def _peer_phrase(detection: AttributedDetection, target_asn: int | None) -> str:
    if detection.event.peer_addr is None:
        return ""
    if detection.peer_asn is not None and detection.peer_asn == target_asn:
        return "by target's network"
    if detection.peer_asn is not None:
        return f"by AS{detection.peer_asn}"
    return f"by {detection.event.peer_addr}"


def _detection_text(detection: AttributedDetection, target_asn: int | None) -> str:
    event = detection.event
    who = _peer_phrase(detection, target_asn)
    if event.dtype is DetectionType.RDNS:
        base = "RDNS query on noncedAddr"
    elif event.dtype is DetectionType.PDNS:
        return "noncedAddr appears in passive DNS database"
    elif event.dtype is DetectionType.FDNS:
        base = f"FDNS {event.evidence.split(' ', 1)[0]} query on nonced name"
    else:
        base = event.evidence.replace(" -> :", " -> noncedAddr:")
    return f"{base} {who}".rstrip()


def build_timeline(target: IPv6Address,
                   joins: Iterable[DetectionJoin]) -> list[TimelineRow]:
    """Rows for one target's trace, ordered by time from the first probe."""
    relevant = [item for item in joins if item.tx.dst_addr == target]
    if not relevant:
        return []
    start = min(item.tx.timestamp for item in relevant)
    last_probe_ts = max(item.tx.timestamp for item in relevant)
    many = len(relevant) > 1
    raw: list[tuple[float, int, str, int, bool]] = []
    for item in relevant:
        label = "last tr probe sent to target" \
            if many and item.tx.timestamp == last_probe_ts \
            else "tr probe sent to target"
        raw.append((item.tx.timestamp, 0, label, item.tx.ttl, False))
        for response in item.trace_responses:
            raw.append((response.timestamp, 1, _RESPONSE_TEXT[response.kind],
                        item.tx.ttl, False))
        for detection in item.detections:
            raw.append((detection.event.timestamp, 2,
                        _detection_text(detection, item.target_asn),
                        item.tx.ttl, True))
    raw.sort(key=lambda row: (row[0], row[1], row[3]))
    return [TimelineRow(ts, ts - start, text, ttl, flagged)
            for ts, kind, text, ttl, flagged in raw]
