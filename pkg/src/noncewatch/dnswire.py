"""Authoritative DNS for the sink's reverse zone and forward domain.

Wire handling covers exactly what backscatter observation needs: UDP
queries up to 512 bytes, PTR/A/AAAA answers, NXDOMAIN with an SOA, and
REFUSED outside our zones.  Every datagram on the port yields either a
logged query event or a malformed tally; reverse lookups on issued
nonces are answered with a per-nonce name under the forward domain so a
later forward lookup of that name stays attributable to the nonce.
"""

from __future__ import annotations

import socket
import struct
import threading
from dataclasses import dataclass
from ipaddress import IPv4Address, IPv6Address
from typing import Callable, Iterable

from .nonces import AddressPlan, NonceKey, is_issued
from .packets import format_timestamp, parse_timestamp

QTYPE_A = 1
QTYPE_SOA = 6
QTYPE_PTR = 12
QTYPE_AAAA = 28

RCODE_NOERROR = 0
RCODE_NXDOMAIN = 3
RCODE_REFUSED = 5

_RCODE_NAMES = {RCODE_NOERROR: "NOERROR", RCODE_NXDOMAIN: "NXDOMAIN",
                RCODE_REFUSED: "REFUSED"}
_QTYPE_NAMES = {QTYPE_A: "A", QTYPE_SOA: "SOA", QTYPE_PTR: "PTR",
                QTYPE_AAAA: "AAAA"}

_HEADER = struct.Struct("!HHHHHH")
MAX_UDP_PAYLOAD = 512


class MalformedQueryError(ValueError):
    pass


class NotReverseNameError(ValueError):
    pass


class BadNibbleCountError(ValueError):
    pass


def qtype_name(code: int) -> str:
    return _QTYPE_NAMES.get(code, f"TYPE{code}")


def rcode_name(code: int) -> str:
    return _RCODE_NAMES.get(code, f"RCODE{code}")


# ---------------------------------------------------------------------------
# names

def encode_name(name: str) -> bytes:
    out = bytearray()
    trimmed = name.rstrip(".")
    if trimmed:
        for label in trimmed.split("."):
            raw = label.encode("ascii")
            if not 1 <= len(raw) <= 63:
                raise ValueError(f"bad label: {label!r}")
            out.append(len(raw))
            out += raw
    out.append(0)
    return bytes(out)


def parse_name(data: bytes, offset: int) -> tuple[str, int]:
    """Decode a possibly compressed name; returns (name, next offset)."""
    labels: list[str] = []
    jumps = 0
    end: int | None = None
    while True:
        if offset >= len(data):
            raise MalformedQueryError("name runs past message")
        length = data[offset]
        if length & 0xC0 == 0xC0:
            if offset + 1 >= len(data):
                raise MalformedQueryError("dangling compression pointer")
            pointer = ((length & 0x3F) << 8) | data[offset + 1]
            if end is None:
                end = offset + 2
            jumps += 1
            if jumps > 64:
                raise MalformedQueryError("compression loop")
            offset = pointer
            continue
        if length & 0xC0:
            raise MalformedQueryError("reserved label type")
        offset += 1
        if length == 0:
            break
        if offset + length > len(data):
            raise MalformedQueryError("label runs past message")
        labels.append(data[offset:offset + length].decode("latin-1"))
        offset += length
    return ".".join(labels), end if end is not None else offset


def address_to_reverse_name(addr: IPv6Address) -> str:
    nibbles = f"{int(addr):032x}"
    return ".".join(reversed(nibbles)) + ".ip6.arpa"


def reverse_name_to_address(qname: str) -> IPv6Address:
    labels = qname.rstrip(".").lower().split(".")
    if labels[-2:] != ["ip6", "arpa"]:
        raise NotReverseNameError(qname)
    nibbles = labels[:-2]
    if len(nibbles) != 32 or not all(len(n) == 1 and n in "0123456789abcdef"
                                     for n in nibbles):
        raise BadNibbleCountError(qname)
    return IPv6Address(int("".join(reversed(nibbles)), 16))


# ---------------------------------------------------------------------------
# messages

@dataclass(frozen=True)
class DnsQuery:
    txn_id: int
    flags: int
    qname: str
    qtype: int
    qclass: int

    @property
    def question_bytes(self) -> bytes:
        return encode_name(self.qname) + struct.pack("!HH", self.qtype, self.qclass)


def parse_query(data: bytes) -> DnsQuery:
    if len(data) < _HEADER.size:
        raise MalformedQueryError("truncated header")
    txn_id, flags, qdcount, _, _, _ = _HEADER.unpack_from(data)
    if flags & 0x8000:
        raise MalformedQueryError("not a query")
    if qdcount < 1:
        raise MalformedQueryError("no question")
    qname, offset = parse_name(data, _HEADER.size)
    if offset + 4 > len(data):
        raise MalformedQueryError("truncated question")
    qtype, qclass = struct.unpack_from("!HH", data, offset)
    return DnsQuery(txn_id, flags, qname, qtype, qclass)


def build_query(txn_id: int, qname: str, qtype: int, qclass: int = 1) -> bytes:
    header = _HEADER.pack(txn_id, 0x0100, 1, 0, 0, 0)
    return header + encode_name(qname) + struct.pack("!HH", qtype, qclass)


@dataclass(frozen=True)
class ResourceRecord:
    name: str
    rtype: int
    ttl: int
    rdata: bytes

    def encode(self, name_bytes: bytes | None = None) -> bytes:
        owner = name_bytes if name_bytes is not None else encode_name(self.name)
        return owner + struct.pack("!HHIH", self.rtype, 1, self.ttl,
                                   len(self.rdata)) + self.rdata


def ptr_record(name: str, ttl: int, target: str) -> ResourceRecord:
    return ResourceRecord(name, QTYPE_PTR, ttl, encode_name(target))


def a_record(name: str, ttl: int, addr: IPv4Address) -> ResourceRecord:
    return ResourceRecord(name, QTYPE_A, ttl, addr.packed)


def aaaa_record(name: str, ttl: int, addr: IPv6Address) -> ResourceRecord:
    return ResourceRecord(name, QTYPE_AAAA, ttl, addr.packed)


def soa_record(apex: str, mname: str, rname: str, ttl: int,
               serial: int = 1) -> ResourceRecord:
    rdata = (encode_name(mname) + encode_name(rname)
             + struct.pack("!IIIII", serial, 7200, 900, 1209600, ttl))
    return ResourceRecord(apex, QTYPE_SOA, ttl, rdata)


def build_response(query: DnsQuery, rcode: int,
                   answers: Iterable[ResourceRecord] = (),
                   authority: Iterable[ResourceRecord] = ()) -> bytes:
    answers = list(answers)
    authority = list(authority)
    flags = 0x8400 | (query.flags & 0x0100) | (rcode & 0xF)
    header = _HEADER.pack(query.txn_id, flags, 1, len(answers), len(authority), 0)
    out = bytearray(header + query.question_bytes)
    for record in answers:
        # answer owner equals the question name; emit a pointer to it
        out += record.encode(name_bytes=b"\xc0\x0c")
    for record in authority:
        out += record.encode()
    return bytes(out)


@dataclass(frozen=True)
class DnsAnswer:
    name: str
    rtype: int
    ttl: int
    rdata: bytes
    target: str | None = None


@dataclass(frozen=True)
class DnsResponse:
    txn_id: int
    rcode: int
    qname: str
    qtype: int
    answers: tuple[DnsAnswer, ...]
    authority: tuple[DnsAnswer, ...]


def _parse_records(data: bytes, offset: int, count: int) -> tuple[list[DnsAnswer], int]:
    records = []
    for _ in range(count):
        name, offset = parse_name(data, offset)
        if offset + 10 > len(data):
            raise MalformedQueryError("truncated record")
        rtype, _, ttl, rdlen = struct.unpack_from("!HHIH", data, offset)
        offset += 10
        if offset + rdlen > len(data):
            raise MalformedQueryError("truncated rdata")
        rdata = data[offset:offset + rdlen]
        target = None
        if rtype == QTYPE_PTR:
            target, _ = parse_name(data, offset)
        offset += rdlen
        records.append(DnsAnswer(name, rtype, ttl, rdata, target))
    return records, offset


def parse_response(data: bytes) -> DnsResponse:
    if len(data) < _HEADER.size:
        raise MalformedQueryError("truncated header")
    txn_id, flags, qdcount, ancount, nscount, _ = _HEADER.unpack_from(data)
    if not flags & 0x8000:
        raise MalformedQueryError("not a response")
    if qdcount != 1:
        raise MalformedQueryError("unexpected question count")
    qname, offset = parse_name(data, _HEADER.size)
    qtype, _ = struct.unpack_from("!HH", data, offset)
    offset += 4
    answers, offset = _parse_records(data, offset, ancount)
    authority, _ = _parse_records(data, offset, nscount)
    return DnsResponse(txn_id, flags & 0xF, qname, qtype,
                       tuple(answers), tuple(authority))


# ---------------------------------------------------------------------------
# zone policy

@dataclass(frozen=True)
class ZoneConfig:
    reverse_apex: str
    forward_domain: str
    answer_ttl: int = 300
    answer_a: IPv4Address | None = None
    answer_aaaa: IPv6Address | None = None

    @classmethod
    def from_plan(cls, plan: AddressPlan, forward_domain: str,
                  answer_ttl: int = 300,
                  answer_a: IPv4Address | None = None,
                  answer_aaaa: IPv6Address | None = None) -> "ZoneConfig":
        nibble_count = (plan.prefix_len + 3) // 4
        nibbles = f"{int(plan.prefix):032x}"[:nibble_count]
        apex = ".".join(reversed(nibbles)) + ".ip6.arpa"
        return cls(apex, forward_domain.rstrip("."), answer_ttl,
                   answer_a, answer_aaaa)

    def in_reverse_zone(self, qname: str) -> bool:
        name = qname.rstrip(".").lower()
        return name == self.reverse_apex or name.endswith("." + self.reverse_apex)

    def in_forward_zone(self, qname: str) -> bool:
        name = qname.rstrip(".").lower()
        apex = self.forward_domain.lower()
        return name == apex or name.endswith("." + apex)

    @property
    def soa(self) -> ResourceRecord:
        return soa_record(self.forward_domain, "ns1." + self.forward_domain,
                          "hostmaster." + self.forward_domain, self.answer_ttl)


def synthesize_ptr_name(nonce: int, zone: ZoneConfig) -> str:
    return f"{nonce:016x}.{zone.forward_domain}"


def forward_name_to_nonce(qname: str, zone: ZoneConfig) -> int | None:
    """Nonce encoded in a synthesized forward name, else None."""
    name = qname.rstrip(".").lower()
    suffix = "." + zone.forward_domain.lower()
    if not name.endswith(suffix):
        return None
    label = name[:-len(suffix)]
    if len(label) != 16 or "." in label:
        return None
    try:
        return int(label, 16)
    except ValueError:
        return None


# ---------------------------------------------------------------------------
# query log

@dataclass(frozen=True)
class DnsQueryEvent:
    timestamp: float
    client_addr: IPv6Address
    qtype: str
    qname: str
    rcode: str = "NOERROR"
    txn_id: int = 0

    def to_line(self) -> str:
        return "\t".join([format_timestamp(self.timestamp),
                          str(self.client_addr), self.qtype, self.qname,
                          self.rcode])

    @classmethod
    def from_line(cls, line: str) -> "DnsQueryEvent":
        ts, client, qtype, qname, rcode = line.rstrip("\n").split("\t")
        return cls(parse_timestamp(ts), IPv6Address(client), qtype, qname, rcode)


# ---------------------------------------------------------------------------
# service

class DnsService:
    """Stateless per-datagram responder with a total query log."""

    def __init__(self, zone: ZoneConfig, key: NonceKey, plan: AddressPlan,
                 high_water: int | Callable[[], int]):
        self.zone = zone
        self.key = key
        self.plan = plan
        self._high_water = high_water
        self.events: list[DnsQueryEvent] = []
        self.malformed = 0

    @property
    def high_water(self) -> int:
        return self._high_water() if callable(self._high_water) else self._high_water

    def _reverse_answer(self, query: DnsQuery) -> tuple[int, list[ResourceRecord]]:
        if query.qtype != QTYPE_PTR:
            return RCODE_NXDOMAIN, []
        try:
            addr = reverse_name_to_address(query.qname)
        except (NotReverseNameError, BadNibbleCountError):
            return RCODE_NXDOMAIN, []
        if int(addr) >> 64 != self.plan.network_high:
            return RCODE_NXDOMAIN, []
        nonce = int(addr) & ((1 << 64) - 1)
        if not is_issued(self.key, self.high_water, nonce):
            return RCODE_NXDOMAIN, []
        name = synthesize_ptr_name(nonce, self.zone)
        return RCODE_NOERROR, [ptr_record(query.qname, self.zone.answer_ttl, name)]

    def _forward_answer(self, query: DnsQuery) -> tuple[int, list[ResourceRecord]]:
        nonce = forward_name_to_nonce(query.qname, self.zone)
        if nonce is None or not is_issued(self.key, self.high_water, nonce):
            return RCODE_NXDOMAIN, []
        if query.qtype == QTYPE_A and self.zone.answer_a is not None:
            return RCODE_NOERROR, [a_record(query.qname, self.zone.answer_ttl,
                                            self.zone.answer_a)]
        if query.qtype == QTYPE_AAAA and self.zone.answer_aaaa is not None:
            return RCODE_NOERROR, [aaaa_record(query.qname, self.zone.answer_ttl,
                                               self.zone.answer_aaaa)]
        return RCODE_NXDOMAIN, []

    def answer(self, query: DnsQuery) -> bytes:
        if self.zone.in_reverse_zone(query.qname):
            rcode, answers = self._reverse_answer(query)
        elif self.zone.in_forward_zone(query.qname):
            rcode, answers = self._forward_answer(query)
        else:
            rcode, answers = RCODE_REFUSED, []
        authority = []
        if rcode == RCODE_NXDOMAIN:
            authority.append(self.zone.soa)
        return build_response(query, rcode, answers, authority)

    def handle_datagram(self, data: bytes, client: IPv6Address,
                        now: float) -> bytes | None:
        """One datagram in, at most one response out; always one log entry."""
        try:
            query = parse_query(data[:MAX_UDP_PAYLOAD])
        except MalformedQueryError:
            self.malformed += 1
            return None
        response = self.answer(query)
        rcode = rcode_name(parse_response(response).rcode)
        self.events.append(DnsQueryEvent(now, client, qtype_name(query.qtype),
                                         query.qname, rcode, query.txn_id))
        return response


class DnsUdpServer:
    """Threaded UDP front end for DnsService, for live deployments."""

    def __init__(self, service: DnsService, host: str = "::", port: int = 53):
        self.service = service
        self._sock = socket.socket(socket.AF_INET6, socket.SOCK_DGRAM)
        self._sock.bind((host, port))
        self._sock.settimeout(0.2)
        self.port = self._sock.getsockname()[1]
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self._clock = None

    def _run(self) -> None:
        import time as _time

        while not self._stop.is_set():
            try:
                data, peer = self._sock.recvfrom(MAX_UDP_PAYLOAD)
            except socket.timeout:
                continue
            except OSError:
                return
            client = IPv6Address(peer[0].split("%", 1)[0])
            response = self.service.handle_datagram(data, client, _time.time())
            if response is not None:
                self._sock.sendto(response, peer)

    def start(self) -> None:
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2)
        self._sock.close()
