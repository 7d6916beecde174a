"""Passive-DNS feed ingestion.

Feeds arrive as newline-delimited JSON records (rrname, rrtype, rdata,
time_first, time_last, source_tag), the shape of common passive-DNS
exports.  A record becomes a detection when its rrname reverses to an
issued nonced address, or when a synthesized per-nonce name with an
issued nonce appears in rrname or rdata.  These detections carry no
peer address: the feed tells us someone's resolver saw the name, not
who asked.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .detect import DetectionEvent, DetectionType
from .dnswire import ZoneConfig, reverse_name_to_address
from .nonces import AddressPlan, NonceKey, is_issued
from .packets import parse_timestamp

_EVIDENCE_LIMIT = 160


@dataclass(frozen=True)
class PdnsRecord:
    rrname: str
    rrtype: str
    rdata: str
    time_first: float
    time_last: float
    source_tag: str = ""

    def to_json(self) -> str:
        return json.dumps({
            "rrname": self.rrname, "rrtype": self.rrtype, "rdata": self.rdata,
            "time_first": self.time_first, "time_last": self.time_last,
            "source_tag": self.source_tag}, sort_keys=True)


def _coerce_time(value) -> float:
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        return parse_timestamp(value)
    raise ValueError(f"bad timestamp: {value!r}")


def parse_pdns_line(line: str) -> PdnsRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ValueError(f"bad JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ValueError("record is not an object")
    try:
        record = PdnsRecord(
            rrname=str(obj["rrname"]),
            rrtype=str(obj["rrtype"]),
            rdata=str(obj["rdata"]),
            time_first=_coerce_time(obj["time_first"]),
            time_last=_coerce_time(obj["time_last"]),
            source_tag=str(obj.get("source_tag", "")))
    except KeyError as exc:
        raise ValueError(f"missing field {exc.args[0]}") from None
    if record.time_first > record.time_last:
        raise ValueError("time_first after time_last")
    return record


def read_pdns_file(path: str | Path) -> tuple[list[PdnsRecord], list[str]]:
    """Parse a feed file; malformed lines are reported, not fatal."""
    records: list[PdnsRecord] = []
    errors: list[str] = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(parse_pdns_line(line))
        except ValueError as exc:
            errors.append(f"{path}:{lineno}: {exc}")
    return records, errors


class IngestState:
    """Dedup memory for repeated scans (nonce + source_tag + time_first)."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self.seen: set[str] = set()
        if self.path is not None and self.path.exists():
            self.seen = {line for line in self.path.read_text().splitlines() if line}

    @staticmethod
    def key(nonce: int, source_tag: str, time_first: float) -> str:
        return f"{nonce:016x}:{source_tag}:{time_first:.6f}"

    def add(self, nonce: int, source_tag: str, time_first: float) -> bool:
        key = self.key(nonce, source_tag, time_first)
        if key in self.seen:
            return False
        self.seen.add(key)
        return True

    def save(self) -> None:
        if self.path is not None:
            self.path.write_text("".join(k + "\n" for k in sorted(self.seen)))


def _name_pattern(zone: ZoneConfig) -> re.Pattern[str]:
    domain = re.escape(zone.forward_domain.lower())
    return re.compile(rf"(?:^|[^0-9a-f])([0-9a-f]{{16}})\.{domain}(?:$|[^0-9a-z-])",
                      re.IGNORECASE)


def _record_nonces(record: PdnsRecord, key: NonceKey, plan: AddressPlan,
                   zone: ZoneConfig, high_water: int,
                   pattern: re.Pattern[str]) -> set[int]:
    found: set[int] = set()
    try:
        addr = reverse_name_to_address(record.rrname)
    except ValueError:
        addr = None
    if addr is not None and int(addr) >> 64 == plan.network_high:
        nonce = int(addr) & ((1 << 64) - 1)
        if is_issued(key, high_water, nonce):
            found.add(nonce)
    for text in (record.rrname, record.rdata):
        for match in pattern.finditer(text.lower()):
            nonce = int(match.group(1), 16)
            if is_issued(key, high_water, nonce):
                found.add(nonce)
    return found


def scan_records(records: Iterable[PdnsRecord], key: NonceKey,
                 plan: AddressPlan, zone: ZoneConfig, high_water: int,
                 state: IngestState | None = None) -> list[DetectionEvent]:
    """Detections for every record naming an issued nonce, deduplicated."""
    state = state if state is not None else IngestState()
    pattern = _name_pattern(zone)
    detections: list[DetectionEvent] = []
    for record in records:
        for nonce in sorted(_record_nonces(record, key, plan, zone,
                                           high_water, pattern)):
            if not state.add(nonce, record.source_tag, record.time_first):
                continue
            evidence = (f"{record.source_tag or 'feed'} {record.rrtype} "
                        f"{record.rrname}")[:_EVIDENCE_LIMIT]
            detections.append(DetectionEvent(
                timestamp=record.time_first,
                dtype=DetectionType.PDNS,
                nonce=nonce,
                peer_addr=None,
                evidence=evidence))
    return detections
