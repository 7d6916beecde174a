"""Classify captured traffic and DNS queries into detections.

A packet either explains itself as normal trace backscatter (an ICMPv6
error quoting one of our probes, or any reply from a probed target), or
it expresses outside interest in a single-use address and becomes a
detection, or it is ignored and counted.  DNS queries split the same
way: reverse lookups of issued nonced addresses are rdns detections,
forward lookups of the per-nonce synthesized names are fdns detections.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from ipaddress import IPv6Address
from typing import Iterable

from .dnswire import DnsQueryEvent, ZoneConfig, forward_name_to_nonce, reverse_name_to_address
from .nonces import AddressPlan, NonceKey, is_issued
from .packets import (
    CapturedPacket,
    ICMP6_DEST_UNREACH,
    ICMP6_ECHO_REPLY,
    ICMP6_ECHO_REQUEST,
    ICMP6_TIME_EXCEEDED,
    TCP_SYN,
    format_timestamp,
    parse_timestamp,
)

MASK64 = (1 << 64) - 1


class DetectionType(enum.Enum):
    RDNS = "rdns"
    PCAP = "pcap"
    PDNS = "pdns"
    FDNS = "fdns"


class ResponseKind(enum.Enum):
    HOP_LIMIT_EXCEEDED = "hop_limit_exceeded"
    ECHO_REPLY = "echo_reply"
    DEST_UNREACHABLE = "dest_unreachable"
    OTHER_ICMP_ERROR = "other_icmp_error"
    DIRECT_REPLY = "direct_reply"


@dataclass(frozen=True)
class TraceResponse:
    timestamp: float
    nonce: int
    responder_addr: IPv6Address
    kind: ResponseKind
    arrived_hop_limit: int

    def to_line(self) -> str:
        return "\t".join([format_timestamp(self.timestamp), f"{self.nonce:016x}",
                          str(self.responder_addr), self.kind.value,
                          str(self.arrived_hop_limit)])

    @classmethod
    def from_line(cls, line: str) -> "TraceResponse":
        ts, nonce, responder, kind, ahl = line.rstrip("\n").split("\t")
        return cls(parse_timestamp(ts), int(nonce, 16), IPv6Address(responder),
                   ResponseKind(kind), int(ahl))


@dataclass(frozen=True)
class DetectionEvent:
    timestamp: float
    dtype: DetectionType
    nonce: int
    peer_addr: IPv6Address | None
    evidence: str

    def to_line(self) -> str:
        peer = "-" if self.peer_addr is None else str(self.peer_addr)
        return "\t".join([format_timestamp(self.timestamp), self.dtype.value,
                          f"{self.nonce:016x}", peer, self.evidence])

    @classmethod
    def from_line(cls, line: str) -> "DetectionEvent":
        ts, dtype, nonce, peer, evidence = line.rstrip("\n").split("\t", 4)
        return cls(parse_timestamp(ts), DetectionType(dtype), int(nonce, 16),
                   None if peer == "-" else IPv6Address(peer), evidence)


@dataclass
class ClassifyStats:
    packets_seen: int = 0
    packets_ignored: int = 0
    dns_seen: int = 0
    dns_ignored: int = 0


def _issued_nonce_of(addr: IPv6Address, key: NonceKey, plan: AddressPlan,
                     high_water: int) -> int | None:
    if int(addr) >> 64 != plan.network_high:
        return None
    nonce = int(addr) & MASK64
    return nonce if is_issued(key, high_water, nonce) else None


def _transport_evidence(pkt: CapturedPacket) -> str:
    if pkt.protocol == "tcp":
        kind = "TCP SYN" if pkt.tcp_flags is not None and pkt.tcp_flags & TCP_SYN \
            else "TCP"
        return f"{kind} :{pkt.src_port} -> :{pkt.dst_port}"
    if pkt.protocol == "udp":
        return f"UDP :{pkt.src_port} -> :{pkt.dst_port}"
    if pkt.protocol == "icmpv6":
        if pkt.icmp_type == ICMP6_ECHO_REQUEST:
            return "ICMPv6 echo request"
        if pkt.icmp_type == ICMP6_ECHO_REPLY:
            return "ICMPv6 echo reply"
        return f"ICMPv6 type {pkt.icmp_type} code {pkt.icmp_code}"
    return pkt.protocol


_ERROR_KINDS = {
    ICMP6_TIME_EXCEEDED: ResponseKind.HOP_LIMIT_EXCEEDED,
    ICMP6_DEST_UNREACH: ResponseKind.DEST_UNREACHABLE,
}


def classify_packet(pkt: CapturedPacket, key: NonceKey, plan: AddressPlan,
                    high_water: int, target_set: frozenset[IPv6Address] | set,
                    ) -> TraceResponse | DetectionEvent | None:
    """One captured packet -> trace response, pcap detection, or None."""
    # 1. ICMPv6 errors quoting an issued probe are expected backscatter,
    #    whatever address the router answered from
    if pkt.protocol == "icmpv6" and pkt.quoted_nonce is not None:
        if is_issued(key, high_water, pkt.quoted_nonce):
            kind = _ERROR_KINDS.get(pkt.icmp_type, ResponseKind.OTHER_ICMP_ERROR)
            return TraceResponse(pkt.timestamp, pkt.quoted_nonce, pkt.src_addr,
                                 kind, pkt.arrived_hop_limit)

    nonce = _issued_nonce_of(pkt.dst_addr, key, plan, high_water)
    if nonce is None:
        return None

    # 2. anything a probed target sends back is a trace response, not curiosity
    if pkt.src_addr in target_set:
        kind = ResponseKind.ECHO_REPLY if pkt.icmp_type == ICMP6_ECHO_REPLY \
            else ResponseKind.DIRECT_REPLY
        return TraceResponse(pkt.timestamp, nonce, pkt.src_addr, kind,
                             pkt.arrived_hop_limit)

    # 3. unsolicited traffic to a single-use address
    return DetectionEvent(pkt.timestamp, DetectionType.PCAP, nonce,
                          pkt.src_addr, _transport_evidence(pkt))


def classify_dns(event: DnsQueryEvent, key: NonceKey, plan: AddressPlan,
                 zone: ZoneConfig, high_water: int) -> DetectionEvent | None:
    """One DNS query -> rdns or fdns detection, or None."""
    if event.qtype == "PTR":
        try:
            addr = reverse_name_to_address(event.qname)
        except ValueError:
            return None
        nonce = _issued_nonce_of(addr, key, plan, high_water)
        if nonce is None:
            return None
        return DetectionEvent(event.timestamp, DetectionType.RDNS, nonce,
                              event.client_addr, event.qname)
    if event.qtype in ("A", "AAAA"):
        nonce = forward_name_to_nonce(event.qname, zone)
        if nonce is None or not is_issued(key, high_water, nonce):
            return None
        return DetectionEvent(event.timestamp, DetectionType.FDNS, nonce,
                              event.client_addr, f"{event.qtype} {event.qname}")
    return None


@dataclass
class DetectionBatch:
    responses: list[TraceResponse] = field(default_factory=list)
    detections: list[DetectionEvent] = field(default_factory=list)
    stats: ClassifyStats = field(default_factory=ClassifyStats)


def run_detection(packets: Iterable[CapturedPacket],
                  dns_events: Iterable[DnsQueryEvent],
                  key: NonceKey, plan: AddressPlan, high_water: int,
                  target_set: Iterable[IPv6Address],
                  zone: ZoneConfig) -> DetectionBatch:
    """Classify both input streams; deterministic for identical inputs."""
    batch = DetectionBatch()
    targets = frozenset(target_set)
    for pkt in packets:
        batch.stats.packets_seen += 1
        outcome = classify_packet(pkt, key, plan, high_water, targets)
        if outcome is None:
            batch.stats.packets_ignored += 1
        elif isinstance(outcome, TraceResponse):
            batch.responses.append(outcome)
        else:
            batch.detections.append(outcome)
    for event in dns_events:
        batch.stats.dns_seen += 1
        detection = classify_dns(event, key, plan, zone, high_water)
        if detection is None:
            batch.stats.dns_ignored += 1
        else:
            batch.detections.append(detection)
    batch.detections.sort(key=lambda d: d.timestamp)
    return batch
