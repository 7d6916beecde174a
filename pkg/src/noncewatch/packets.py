"""Probe crafting, paced transmission, capture, and on-disk log formats.

Wire bytes are plain IPv6 packets (no link-layer framing).  The offline
adapter exchanges the same bytes as length-prefixed frames so the
classifier has a single parse path for live and simulated traffic.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from ipaddress import IPv6Address
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator

from .nonces import AddressPlan, address_to_nonce, nonce_to_address
from .scheduling import CampaignConfig, ProbeMode, ProbeSpec

PROBE_MAGIC = b"nwprobe\x00"
PROTO_TCP = 6
PROTO_UDP = 17
PROTO_ICMPV6 = 58

ICMP6_DEST_UNREACH = 1
ICMP6_TIME_EXCEEDED = 3
ICMP6_ECHO_REQUEST = 128
ICMP6_ECHO_REPLY = 129
# an ICMPv6 error plus headers must fit the protocol's minimum MTU
_ERROR_QUOTE_LIMIT = 1280 - 40 - 8

TCP_SYN = 0x02
TCP_ACK = 0x10
TCP_RST = 0x04


class SendFailure(Exception):
    """A single probe could not be handed to the transport."""


class SystemClock:
    def now(self) -> float:
        return time.time()

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)


def format_timestamp(ts: float) -> str:
    """ISO-8601 UTC with microseconds, e.g. 2021-02-26T00:00:01.000500Z."""
    stamp = datetime.fromtimestamp(ts, tz=timezone.utc)
    return stamp.strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def parse_timestamp(text: str) -> float:
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    return datetime.fromisoformat(text).timestamp()


# ---------------------------------------------------------------------------
# crafting

def _checksum(src: IPv6Address, dst: IPv6Address, next_header: int,
              payload: bytes) -> int:
    pseudo = src.packed + dst.packed + struct.pack("!I3xB", len(payload), next_header)
    data = pseudo + payload
    if len(data) % 2:
        data += b"\x00"
    total = sum(struct.unpack(f"!{len(data) // 2}H", data))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def craft_ipv6(src: IPv6Address, dst: IPv6Address, next_header: int,
               hop_limit: int, payload: bytes) -> bytes:
    header = struct.pack("!IHBB", 6 << 28, len(payload), next_header, hop_limit)
    return header + src.packed + dst.packed + payload


def craft_udp(src: IPv6Address, dst: IPv6Address, src_port: int, dst_port: int,
              payload: bytes, hop_limit: int) -> bytes:
    segment = struct.pack("!HHHH", src_port, dst_port, 8 + len(payload), 0) + payload
    csum = _checksum(src, dst, PROTO_UDP, segment)
    segment = segment[:6] + struct.pack("!H", csum or 0xFFFF) + segment[8:]
    return craft_ipv6(src, dst, PROTO_UDP, hop_limit, segment)


def craft_icmpv6(src: IPv6Address, dst: IPv6Address, icmp_type: int, code: int,
                 body: bytes, hop_limit: int) -> bytes:
    message = struct.pack("!BBH", icmp_type, code, 0) + body
    csum = _checksum(src, dst, PROTO_ICMPV6, message)
    message = message[:2] + struct.pack("!H", csum) + message[4:]
    return craft_ipv6(src, dst, PROTO_ICMPV6, hop_limit, message)


def craft_echo(src: IPv6Address, dst: IPv6Address, ident: int, seq: int,
               payload: bytes, hop_limit: int, reply: bool = False) -> bytes:
    icmp_type = ICMP6_ECHO_REPLY if reply else ICMP6_ECHO_REQUEST
    body = struct.pack("!HH", ident, seq) + payload
    return craft_icmpv6(src, dst, icmp_type, 0, body, hop_limit)


def craft_icmpv6_error(src: IPv6Address, dst: IPv6Address, icmp_type: int,
                       code: int, invoking_packet: bytes,
                       hop_limit: int = 64) -> bytes:
    body = b"\x00\x00\x00\x00" + invoking_packet[:_ERROR_QUOTE_LIMIT - 4]
    return craft_icmpv6(src, dst, icmp_type, code, body, hop_limit)


def craft_tcp(src: IPv6Address, dst: IPv6Address, src_port: int, dst_port: int,
              flags: int, hop_limit: int, seq: int = 0, ack: int = 0) -> bytes:
    segment = struct.pack("!HHIIBBHHH", src_port, dst_port, seq, ack,
                          5 << 4, flags, 65535, 0, 0)
    csum = _checksum(src, dst, PROTO_TCP, segment)
    segment = segment[:16] + struct.pack("!H", csum) + segment[18:]
    return craft_ipv6(src, dst, PROTO_TCP, hop_limit, segment)


def craft_probe(spec: ProbeSpec, plan: AddressPlan, mode: ProbeMode) -> bytes:
    source = nonce_to_address(plan, spec.nonce).address
    payload = PROBE_MAGIC + struct.pack("!Q", spec.sequence_index)
    if mode is ProbeMode.ICMPV6_ECHO:
        ident = (spec.sequence_index >> 16) & 0xFFFF
        seq = spec.sequence_index & 0xFFFF
        return craft_echo(source, spec.target, ident, seq, payload, spec.ttl)
    return craft_udp(source, spec.target, spec.src_port, spec.dst_port,
                     payload, spec.ttl)


# ---------------------------------------------------------------------------
# parsing

@dataclass(frozen=True)
class ParsedPacket:
    src: IPv6Address
    dst: IPv6Address
    hop_limit: int
    protocol: str
    src_port: int = 0
    dst_port: int = 0
    icmp_type: int | None = None
    icmp_code: int | None = None
    tcp_flags: int | None = None
    echo_ident: int | None = None
    echo_seq: int | None = None
    payload: bytes = b""
    quoted: "ParsedPacket | None" = None


def parse_frame(data: bytes, _depth: int = 0) -> ParsedPacket:
    if len(data) < 40:
        raise ValueError("truncated IPv6 header")
    first, payload_len, next_header, hop_limit = struct.unpack("!IHBB", data[:8])
    if first >> 28 != 6:
        raise ValueError("not an IPv6 packet")
    src = IPv6Address(data[8:24])
    dst = IPv6Address(data[24:40])
    body = data[40:40 + payload_len]
    if len(body) < payload_len and _depth == 0:
        raise ValueError("truncated IPv6 payload")

    if next_header == PROTO_UDP:
        if len(body) < 8:
            raise ValueError("truncated UDP header")
        sport, dport = struct.unpack("!HH", body[:4])
        return ParsedPacket(src, dst, hop_limit, "udp", sport, dport,
                            payload=body[8:])
    if next_header == PROTO_TCP:
        if len(body) < 20:
            raise ValueError("truncated TCP header")
        sport, dport = struct.unpack("!HH", body[:4])
        offset = (body[12] >> 4) * 4
        return ParsedPacket(src, dst, hop_limit, "tcp", sport, dport,
                            tcp_flags=body[13], payload=body[offset:])
    if next_header == PROTO_ICMPV6:
        if len(body) < 4:
            raise ValueError("truncated ICMPv6 header")
        icmp_type, icmp_code = body[0], body[1]
        if icmp_type in (ICMP6_ECHO_REQUEST, ICMP6_ECHO_REPLY):
            if len(body) < 8:
                raise ValueError("truncated echo message")
            ident, seq = struct.unpack("!HH", body[4:8])
            return ParsedPacket(src, dst, hop_limit, "icmpv6",
                                icmp_type=icmp_type, icmp_code=icmp_code,
                                echo_ident=ident, echo_seq=seq, payload=body[8:])
        quoted = None
        if icmp_type in (ICMP6_DEST_UNREACH, ICMP6_TIME_EXCEEDED) and _depth == 0:
            try:
                quoted = parse_frame(body[8:], _depth=1)
            except ValueError:
                quoted = None
        return ParsedPacket(src, dst, hop_limit, "icmpv6",
                            icmp_type=icmp_type, icmp_code=icmp_code,
                            payload=body[4:], quoted=quoted)
    return ParsedPacket(src, dst, hop_limit, "other", payload=body)


def parse_probe_payload(payload: bytes) -> int | None:
    """Sequence index from a probe payload, None if the marker is absent."""
    if len(payload) >= 16 and payload[:8] == PROBE_MAGIC:
        return struct.unpack("!Q", payload[8:16])[0]
    return None


def parse_probe(data: bytes, plan: AddressPlan) -> ProbeSpec:
    """Recover the ProbeSpec a probe was crafted from (inverse of craft_probe)."""
    packet = parse_frame(data)
    sequence_index = parse_probe_payload(packet.payload)
    if sequence_index is None:
        raise ValueError("probe marker missing")
    return ProbeSpec(
        target=packet.dst,
        ttl=packet.hop_limit,
        nonce=address_to_nonce(plan, packet.src),
        src_port=packet.src_port,
        dst_port=packet.dst_port,
        sequence_index=sequence_index)


# ---------------------------------------------------------------------------
# records and logs

@dataclass(frozen=True)
class TransmissionRecord:
    timestamp: float
    nonce: int
    src_addr: IPv6Address
    dst_addr: IPv6Address
    ttl: int
    protocol: str
    src_port: int
    dst_port: int

    def to_line(self) -> str:
        return "\t".join([
            format_timestamp(self.timestamp), f"{self.nonce:016x}",
            str(self.src_addr), str(self.dst_addr), str(self.ttl),
            self.protocol, str(self.src_port), str(self.dst_port)])

    @classmethod
    def from_line(cls, line: str) -> "TransmissionRecord":
        ts, nonce, src, dst, ttl, proto, sport, dport = line.rstrip("\n").split("\t")
        return cls(parse_timestamp(ts), int(nonce, 16), IPv6Address(src),
                   IPv6Address(dst), int(ttl), proto, int(sport), int(dport))


@dataclass(frozen=True)
class CapturedPacket:
    timestamp: float
    src_addr: IPv6Address
    dst_addr: IPv6Address
    arrived_hop_limit: int
    protocol: str
    src_port: int = 0
    dst_port: int = 0
    icmp_type: int | None = None
    icmp_code: int | None = None
    quoted_nonce: int | None = None
    quoted_ttl: int | None = None
    quoted_dst: IPv6Address | None = None
    tcp_flags: int | None = None
    payload_summary: bytes = b""

    def to_line(self) -> str:
        def opt(v) -> str:
            return "-" if v is None else str(v)

        quoted = "-" if self.quoted_nonce is None else f"{self.quoted_nonce:016x}"
        return "\t".join([
            format_timestamp(self.timestamp), str(self.src_addr),
            str(self.dst_addr), str(self.arrived_hop_limit), self.protocol,
            str(self.src_port), str(self.dst_port), opt(self.icmp_type),
            opt(self.icmp_code), quoted, opt(self.quoted_ttl),
            opt(self.quoted_dst), opt(self.tcp_flags)])

    @classmethod
    def from_line(cls, line: str) -> "CapturedPacket":
        parts = line.rstrip("\n").split("\t")
        (ts, src, dst, ahl, proto, sport, dport,
         itype, icode, quoted, qttl, qdst, flags) = parts

        def opt_int(v: str) -> int | None:
            return None if v == "-" else int(v)

        return cls(parse_timestamp(ts), IPv6Address(src), IPv6Address(dst),
                   int(ahl), proto, int(sport), int(dport), opt_int(itype),
                   opt_int(icode),
                   None if quoted == "-" else int(quoted, 16),
                   opt_int(qttl),
                   None if qdst == "-" else IPv6Address(qdst),
                   opt_int(flags))


class TsvLog:
    """Append-oriented tab-separated record file."""

    def __init__(self, path: str | Path, record_type):
        self.path = Path(path)
        self._record_type = record_type

    def append(self, record) -> None:
        with self.path.open("a") as fh:
            fh.write(record.to_line() + "\n")

    def append_all(self, records: Iterable) -> None:
        with self.path.open("a") as fh:
            for record in records:
                fh.write(record.to_line() + "\n")

    def records(self) -> list:
        if not self.path.exists():
            return []
        return [self._record_type.from_line(line)
                for line in self.path.read_text().splitlines() if line]


# ---------------------------------------------------------------------------
# frame files (offline adapter)

_FRAME_HEADER = struct.Struct("!dI")


class FrameWriter:
    def __init__(self, stream: BinaryIO):
        self._stream = stream

    def write(self, timestamp: float, data: bytes) -> None:
        self._stream.write(_FRAME_HEADER.pack(timestamp, len(data)) + data)


def read_frames(stream: BinaryIO) -> Iterator[tuple[float, bytes]]:
    while True:
        header = stream.read(_FRAME_HEADER.size)
        if not header:
            return
        if len(header) < _FRAME_HEADER.size:
            raise ValueError("truncated frame header")
        timestamp, length = _FRAME_HEADER.unpack(header)
        data = stream.read(length)
        if len(data) < length:
            raise ValueError("truncated frame body")
        yield timestamp, data


# ---------------------------------------------------------------------------
# rate limiting and the send loop

class TokenBucket:
    """Blocking pacer: take() returns once a token is available."""

    def __init__(self, rate: float, capacity: float | None = None, clock=None):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.rate = rate
        self.capacity = capacity if capacity is not None else max(1.0, rate * 0.05)
        self._clock = clock or SystemClock()
        self._tokens = self.capacity
        self._last = self._clock.now()

    def _refill(self) -> None:
        now = self._clock.now()
        self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
        self._last = now

    def take(self, amount: float = 1.0) -> None:
        self._refill()
        if self._tokens < amount:
            self._clock.sleep((amount - self._tokens) / self.rate)
            self._refill()
        self._tokens -= amount


@dataclass
class SendSummary:
    sent: int = 0
    failed: int = 0
    elapsed_s: float = 0.0
    warnings: list[str] = field(default_factory=list)

    @property
    def achieved_pps(self) -> float:
        return self.sent / self.elapsed_s if self.elapsed_s > 0 else float("inf")


def send_campaign(specs: Iterable[ProbeSpec], config: CampaignConfig,
                  transport, sink: TsvLog, clock=None,
                  on_failure=None) -> SendSummary:
    """Pace the stream onto the transport, logging one record per probe."""
    clock = clock or SystemClock()
    bucket = TokenBucket(config.rate_pps, clock=clock)
    summary = SendSummary()
    started = clock.now()
    proto = config.mode.protocol
    for spec in specs:
        bucket.take()
        wire = craft_probe(spec, config.plan, config.mode)
        try:
            transport.send(wire)
        except SendFailure as exc:
            summary.failed += 1
            if on_failure is not None:
                on_failure(spec, exc)
            continue
        sink.append(TransmissionRecord(
            timestamp=clock.now(),
            nonce=spec.nonce,
            src_addr=nonce_to_address(config.plan, spec.nonce).address,
            dst_addr=spec.target,
            ttl=spec.ttl,
            protocol=proto,
            src_port=spec.src_port,
            dst_port=spec.dst_port))
        summary.sent += 1
    summary.elapsed_s = clock.now() - started
    if summary.sent and summary.elapsed_s > 0:
        achieved = summary.achieved_pps
        if achieved < 0.9 * config.rate_pps and summary.elapsed_s >= 1.0:
            summary.warnings.append(
                f"rate unachievable: asked {config.rate_pps:.0f} pps, "
                f"sent at {achieved:.0f} pps")
    return summary


# ---------------------------------------------------------------------------
# capture

@dataclass
class CaptureStats:
    matched: int = 0
    ignored: int = 0
    malformed: int = 0


def _captured_from(timestamp: float, packet: ParsedPacket) -> CapturedPacket:
    quoted_nonce = quoted_ttl = quoted_dst = None
    if packet.quoted is not None:
        quoted_nonce = int(packet.quoted.src) & ((1 << 64) - 1)
        quoted_ttl = packet.quoted.hop_limit
        quoted_dst = packet.quoted.dst
    return CapturedPacket(
        timestamp=timestamp,
        src_addr=packet.src,
        dst_addr=packet.dst,
        arrived_hop_limit=packet.hop_limit,
        protocol=packet.protocol,
        src_port=packet.src_port,
        dst_port=packet.dst_port,
        icmp_type=packet.icmp_type,
        icmp_code=packet.icmp_code,
        quoted_nonce=quoted_nonce,
        quoted_ttl=quoted_ttl,
        quoted_dst=quoted_dst,
        tcp_flags=packet.tcp_flags,
        payload_summary=packet.payload[:64])


def capture_loop(frames: Iterable[tuple[float, bytes]], plan: AddressPlan,
                 dns_address: IPv6Address | None = None,
                 stats: CaptureStats | None = None) -> Iterator[CapturedPacket]:
    """Keep traffic addressed to the sink prefix or to the DNS service."""
    stats = stats if stats is not None else CaptureStats()
    for timestamp, data in frames:
        try:
            packet = parse_frame(data)
        except ValueError:
            stats.malformed += 1
            continue
        in_prefix = int(packet.dst) >> 64 == plan.network_high
        to_dns = (dns_address is not None and packet.dst == dns_address
                  and packet.dst_port == 53)
        if not in_prefix and not to_dns:
            stats.ignored += 1
            continue
        stats.matched += 1
        yield _captured_from(timestamp, packet)


# ---------------------------------------------------------------------------
# live transport (operator-provided interface; exercised only on real hosts)

class RawSocketTransport:
    """Sends crafted IPv6 packets through a packet socket.

    Requires CAP_NET_RAW, the egress interface name, and the gateway's
    link-layer address. Not used by the offline pipeline.
    """

    ETH_P_IPV6 = 0x86DD

    def __init__(self, interface: str, gateway_mac: bytes, source_mac: bytes):
        import socket as _socket

        if len(gateway_mac) != 6 or len(source_mac) != 6:
            raise ValueError("link-layer addresses are 6 bytes")
        self._header = gateway_mac + source_mac + struct.pack("!H", self.ETH_P_IPV6)
        self._sock = _socket.socket(_socket.AF_PACKET, _socket.SOCK_RAW)
        self._sock.bind((interface, 0))

    def send(self, wire: bytes) -> None:
        try:
            self._sock.send(self._header + wire)
        except OSError as exc:
            raise SendFailure(str(exc)) from exc

    def close(self) -> None:
        self._sock.close()
