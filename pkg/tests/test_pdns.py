import json
import random
from ipaddress import IPv6Address

import pytest

from noncewatch.detect import DetectionType
from noncewatch.dnswire import ZoneConfig, address_to_reverse_name, synthesize_ptr_name
from noncewatch.nonces import AddressPlan, NonceKey, encode_nonce, nonce_to_address
from noncewatch.pdns import (
    IngestState,
    PdnsRecord,
    parse_pdns_line,
    read_pdns_file,
    scan_records,
)

KEY = NonceKey(bytes(range(32)))
PLAN = AddressPlan.parse("2001:db8::/36")
ZONE = ZoneConfig.from_plan(PLAN, "noise.example.com")
HIGH_WATER = 2048


def issued_reverse_name(counter=0):
    addr = nonce_to_address(PLAN, encode_nonce(KEY, counter)).address
    return address_to_reverse_name(addr)


def record(**kw):
    base = dict(rrname="example.org", rrtype="A", rdata="192.0.2.1",
                time_first=1000.0, time_last=2000.0, source_tag="dnsdb")
    base.update(kw)
    return PdnsRecord(**base)


def scan(records, state=None):
    return scan_records(records, KEY, PLAN, ZONE, HIGH_WATER, state=state)


def test_reverse_rrname_match():
    rec = record(rrname=issued_reverse_name(5), rrtype="PTR",
                 rdata=synthesize_ptr_name(encode_nonce(KEY, 5), ZONE))
    out = scan([rec])
    assert len(out) == 1
    event = out[0]
    assert event.dtype is DetectionType.PDNS
    assert event.nonce == encode_nonce(KEY, 5)
    assert event.peer_addr is None
    assert event.timestamp == 1000.0
    assert event.evidence.startswith("dnsdb PTR ")


def test_forward_name_in_rdata_matches():
    name = synthesize_ptr_name(encode_nonce(KEY, 9), ZONE)
    rec = record(rrname="resolver-cache.example.net", rrtype="PTR", rdata=name)
    out = scan([rec])
    assert [e.nonce for e in out] == [encode_nonce(KEY, 9)]


def test_forward_name_as_rrname_matches():
    name = synthesize_ptr_name(encode_nonce(KEY, 10), ZONE)
    rec = record(rrname=name.upper(), rrtype="AAAA", rdata="2001:db8:53::80")
    assert len(scan([rec])) == 1


def test_unrelated_record_no_detection():
    assert scan([record()]) == []
    assert scan([record(rrname="0123456789abcdef.elsewhere.org")]) == []


def test_single_nibble_mutations_never_match():
    # flip one nibble of a valid reverse name: decodes to a non-issued nonce
    base = issued_reverse_name(3)
    hits = 0
    for position in range(0, 32 * 2, 2):
        original = base[position]
        for replacement in "0123456789abcdef":
            if replacement == original:
                continue
            mutated = base[:position] + replacement + base[position + 1:]
            hits += len(scan([record(rrname=mutated, rrtype="PTR",
                                     rdata="x.example.org")]))
    assert hits == 0


def test_zero_false_accepts_on_random_corpus():
    rng = random.Random(23)
    records = []
    for _ in range(50_000):
        records.append(record(
            rrname=address_to_reverse_name(IPv6Address(
                (PLAN.network_high << 64) | rng.getrandbits(64))),
            rrtype="PTR", rdata="host.example.net"))
    for _ in range(50_000):
        records.append(record(
            rrname=f"{rng.getrandbits(64):016x}.noise.example.com",
            rrtype="AAAA", rdata="2001:db8::1"))
    assert scan(records) == []


def test_rescan_adds_no_duplicates(tmp_path):
    state_path = tmp_path / "ingest.state"
    rec = record(rrname=issued_reverse_name(7), rrtype="PTR", rdata="x")
    state = IngestState(state_path)
    first = scan([rec, rec], state=state)
    assert len(first) == 1
    state.save()
    again = scan([rec], state=IngestState(state_path))
    assert again == []


def test_distinct_times_are_distinct_detections():
    rec1 = record(rrname=issued_reverse_name(8), rrtype="PTR", rdata="x",
                  time_first=1000.0)
    rec2 = record(rrname=issued_reverse_name(8), rrtype="PTR", rdata="x",
                  time_first=3000.0, time_last=3000.0)
    state = IngestState()
    assert len(scan([rec1, rec2], state=state)) == 2


def test_parse_line_roundtrip():
    rec = record()
    assert parse_pdns_line(rec.to_json()) == rec


def test_parse_line_errors():
    with pytest.raises(ValueError, match="bad JSON"):
        parse_pdns_line("{nope")
    with pytest.raises(ValueError, match="missing field"):
        parse_pdns_line(json.dumps({"rrname": "a"}))
    with pytest.raises(ValueError, match="time_first after"):
        parse_pdns_line(json.dumps({
            "rrname": "a", "rrtype": "PTR", "rdata": "b",
            "time_first": 5, "time_last": 1}))
    with pytest.raises(ValueError, match="not an object"):
        parse_pdns_line("[1,2]")


def test_read_file_skips_bad_lines(tmp_path):
    path = tmp_path / "feed.jsonl"
    good = record(rrname=issued_reverse_name(1), rrtype="PTR", rdata="x")
    path.write_text(good.to_json() + "\n{broken\n\n" + record().to_json() + "\n")
    records, errors = read_pdns_file(path)
    assert len(records) == 2
    assert len(errors) == 1
    assert ":2:" in errors[0]


def test_iso_timestamps_accepted():
    rec = parse_pdns_line(json.dumps({
        "rrname": "a.example.org", "rrtype": "A", "rdata": "192.0.2.1",
        "time_first": "2021-02-26T00:00:00.000000Z",
        "time_last": "2021-02-26T01:00:00.000000Z", "source_tag": "t"}))
    assert rec.time_first == 1614297600.0
