"""Whole-system guarantees, one test per shipped claim.

The simulated-network scenarios run on a virtual clock, so every
expected timing below is exact arithmetic, not a tolerance window.
"""

from __future__ import annotations

import random
import tempfile
import time
from ipaddress import IPv6Address
from pathlib import Path

import numpy as np

from acceptance_dataset import golden_grid
from noncewatch.correlate import (attribute_all, build_timeline,
                                  eavesdrop_candidates, infer_hops_traversed,
                                  join, rtt_distance_bound, summarize)
from noncewatch.detect import DetectionType, run_detection
from noncewatch.dnswire import ZoneConfig, address_to_reverse_name
from noncewatch.nonces import (AddressPlan, NonceKey, decode_nonces,
                               encode_nonce, encode_nonces, is_issued,
                               nonce_to_address)
from noncewatch.packets import (CapturedPacket, TransmissionRecord, TsvLog,
                                capture_loop)
from noncewatch.pdns import PdnsRecord, scan_records
from noncewatch.scheduling import CampaignConfig, ProbeMode, plan_probes
from noncewatch.simnet import (BehaviorSpec, DelaySpec, HopSpec, MonitorSpec,
                               TargetSpec, Topology, random_topology,
                               run_simulation)

KEY = NonceKey(bytes(range(32)), key_id=1)
PLAN = AddressPlan.parse("2001:db8::/64")
ZONE = ZoneConfig.from_plan(PLAN, "noise.example.com")


def _config(**overrides) -> CampaignConfig:
    base = dict(mode=ProbeMode.UDP_TO_443, max_ttl=12, fill_mode=False,
                rate_pps=1000.0, permutation_seed=1, key=KEY, plan=PLAN)
    base.update(overrides)
    return CampaignConfig(**base)


def _simulate(topology: Topology, config: CampaignConfig, seed: int):
    """Campaign plus passive collection; returns (tx records, detection batch)."""
    targets = [t.address for t in topology.targets]
    with tempfile.TemporaryDirectory() as scratch:
        sink = TsvLog(Path(scratch) / "tx.tsv", TransmissionRecord)
        result = run_simulation(plan_probes(targets, config), config,
                                topology, ZONE, seed=seed, sink=sink)
        tx = sink.records()
    batch = run_detection(capture_loop(result.frames, PLAN), result.dns_events,
                          KEY, PLAN, len(tx), set(targets), ZONE)
    return tx, batch


def test_01_nonce_codec_roundtrips_a_million_counters():
    started = time.monotonic()
    counters = np.arange(1 << 20, dtype=np.uint64)
    nonces = encode_nonces(KEY, counters)
    assert len(np.unique(nonces)) == 1 << 20
    assert np.array_equal(decode_nonces(KEY, nonces), counters)
    assert time.monotonic() - started < 10.0


def test_02_probe_plan_covers_every_target_ttl_pair_once():
    targets = [IPv6Address(f"2001:db8:aaaa::{i + 1:x}") for i in range(10_000)]

    def plan_once() -> list:
        return list(plan_probes(targets, _config(max_ttl=16,
                                                 permutation_seed=20)))

    first = plan_once()
    assert first == plan_once()
    assert len(first) == 160_000
    assert {(s.target, s.ttl) for s in first} == {
        (target, ttl) for target in targets for ttl in range(1, 17)}
    moved = sum(1 for i, spec in enumerate(first)
                if (spec.target, spec.ttl) != (targets[i // 16], i % 16 + 1))
    assert moved >= 0.99 * len(first)


def test_03_detection_rejects_adversarial_noise_exactly():
    rng = random.Random(303)
    high_water = 1_000
    issued = [encode_nonce(KEY, counter) for counter in range(high_water)]
    planted = [CapturedPacket(
        timestamp=float(i),
        src_addr=IPv6Address(f"2001:db8:beef::{i % 250 + 1:x}"),
        dst_addr=nonce_to_address(PLAN, nonce).address, arrived_hop_limit=57,
        protocol="tcp", src_port=rng.randint(1024, 65000),
        dst_port=rng.choice((80, 443)), tcp_flags=0x02)
        for i, nonce in enumerate(issued)]

    adversarial: list[CapturedPacket] = []
    while len(adversarial) < 100_000:
        serial = len(adversarial)
        nonce = issued[serial % high_water] ^ (1 << rng.randrange(64))
        if is_issued(KEY, high_water, nonce):
            continue
        inside_plan = serial % 4 != 0
        dst = nonce_to_address(PLAN, nonce).address if inside_plan \
            else IPv6Address((0x2001_0db8_cafe_0000 << 64) | nonce)
        is_icmp = serial % 3 == 2
        quotes = serial % 6 == 2
        adversarial.append(CapturedPacket(
            timestamp=2_000.0 + serial,
            src_addr=IPv6Address((0x2600 << 112) | rng.getrandbits(64)),
            dst_addr=dst, arrived_hop_limit=rng.randint(1, 255),
            protocol=("tcp", "udp", "icmpv6")[serial % 3],
            src_port=rng.randint(1, 65535), dst_port=rng.randint(1, 65535),
            icmp_type=3 if is_icmp else None,
            icmp_code=0 if is_icmp else None,
            quoted_nonce=nonce if quotes else None,
            quoted_ttl=rng.randint(1, 32) if quotes else None,
            tcp_flags=0x02 if serial % 3 == 0 else None))

    batch = run_detection(planted + adversarial, [], KEY, PLAN, high_water,
                          set(), ZONE)
    assert batch.responses == []
    assert len(batch.detections) == high_water
    assert {d.nonce for d in batch.detections} == set(issued)
    assert all(d.dtype is DetectionType.PCAP for d in batch.detections)
    assert batch.stats.packets_seen == 101_000
    assert batch.stats.packets_ignored == 100_000


def test_04_edge_monitor_timeline_is_exact_in_virtual_time():
    target = IPv6Address("2001:db8:1000::1")
    hops = tuple(HopSpec(IPv6Address(f"2001:db8:2000::{h:x}"),
                         asn=64496 if h <= 6 else 64500, latency_ms=0.0)
                 for h in range(1, 13))
    client = IPv6Address("2001:db8:3000::5")
    monitor = MonitorSpec("edge", attach_hop=10, asn=64500, sample_rate=1.0,
                          behaviors=(
                              BehaviorSpec("rdns", DelaySpec("fixed", 547.0),
                                           client_addr=client),
                              BehaviorSpec("rdns", DelaySpec("fixed", 550.0),
                                           client_addr=client)))
    topology = Topology((TargetSpec(target, asn=64500, path=hops,
                                    monitors=(monitor,)),))
    tx, batch = _simulate(topology, _config(max_ttl=10, rate_pps=2.0,
                                            permutation_seed=2), seed=1)
    result = join(tx, batch.detections, batch.responses)
    attribute_all(result.joins, topology.asn_table())
    rows = build_timeline(target, result.joins)

    assert len(rows) == 22
    probe_order = [10, 2, 1, 6, 9, 4, 5, 8, 3, 7]
    for slot, ttl in enumerate(probe_order):
        probe, response = rows[2 * slot], rows[2 * slot + 1]
        assert probe.delta_s == 0.5 * slot
        assert response.delta_s == 0.5 * slot
        assert (probe.ttl, response.ttl) == (ttl, ttl)
        assert probe.text == ("last tr probe sent to target" if slot == 9
                              else "tr probe sent to target")
        assert response.text == "tr hop response"
        assert not probe.flagged and not response.flagged
    for row, delta_s, delta in ((rows[20], 547.0, "9m 7s"),
                                (rows[21], 550.0, "9m 10s")):
        assert row.delta_s == delta_s
        assert row.delta == delta
        assert row.ttl == 10
        assert row.flagged
        assert row.text == "RDNS query on noncedAddr by target's network"


def test_05_link_monitor_triple_binds_to_ttl_two():
    target = IPv6Address("2001:db8:1000::1")
    hops = tuple(HopSpec(IPv6Address(f"2001:db8:2000::{h:x}"), asn=64496,
                         latency_ms=0.125, initial_hop_limit=32)
                 for h in range(1, 13))
    tap = MonitorSpec("tap", attach_hop=2, asn=15169, sample_rate=1.0,
                      behaviors=(
                          BehaviorSpec("counter_probe",
                                       DelaySpec("fixed", 598.0),
                                       client_addr=IPv6Address("2001:4860:4860::1"),
                                       ports=(80,), src_port=20),
                          BehaviorSpec("counter_probe",
                                       DelaySpec("fixed", 625.0),
                                       client_addr=IPv6Address("2001:4860:4860::1"),
                                       ports=(443,), src_port=20),
                          BehaviorSpec("rdns", DelaySpec("fixed", 643.0),
                                       client_addr=IPv6Address("2001:4860:4860::64"))))
    topology = Topology((TargetSpec(target, asn=64500, path=hops,
                                    monitors=(tap,)),))
    tx, batch = _simulate(topology, _config(max_ttl=2, rate_pps=100.0), seed=1)
    result = join(tx, batch.detections, batch.responses)
    table = topology.asn_table()
    attribute_all(result.joins, table)

    tapped = [j for j in result.joins if j.tx.ttl == 2]
    assert len(tapped) == 1
    tapped = tapped[0]
    triple = sorted(tapped.detections, key=lambda d: d.delta_time)
    assert [d.event.dtype.value for d in triple] == ["pcap", "pcap", "rdns"]
    assert [d.event.evidence for d in triple[:2]] == [
        "TCP SYN :20 -> :80", "TCP SYN :20 -> :443"]
    assert [round(d.delta_time, 6) for d in triple] == [
        598.0005, 625.0005, 643.00025]
    assert {d.event.nonce for d in triple} == {tapped.tx.nonce}

    (response,) = tapped.trace_responses
    assert response.arrived_hop_limit == 31
    assert round(response.timestamp - tapped.tx.timestamp, 6) == 0.0005

    candidates = eavesdrop_candidates(result.joins, table, ttl_threshold=4)
    assert [(c.join.tx.dst_addr, c.bound) for c in candidates] == [(target, 2)]


def test_06_monitor_ttl_bounds_match_attach_hops():
    monitors_checked = 0
    for seed in range(1, 21):
        topology = random_topology(seed, rdns_only=True)
        tx, batch = _simulate(topology, _config(permutation_seed=seed),
                              seed=seed)
        result = join(tx, batch.detections, batch.responses)
        truth = topology.ground_truth()
        owner: dict[IPv6Address, str] = {}
        for name, monitor in truth.items():
            for addr in monitor.acting_addrs:
                assert addr not in owner
                owner[addr] = name
        bounds: dict[str, int] = {}
        for item in result.joins:
            for joined in item.detections:
                name = owner[joined.event.peer_addr]
                bounds[name] = min(bounds.get(name, 1 << 30), item.tx.ttl)
        assert set(bounds) == set(truth)
        for name, bound in bounds.items():
            assert bound == truth[name].attach_hop
        monitors_checked += len(truth)
    assert monitors_checked >= 20


def test_07_hop_limit_and_distance_inference():
    assert infer_hops_traversed(31) == (32, 1)
    assert rtt_distance_bound(0.5) == 50.0


def test_08_third_party_rdns_fraction_is_exact():
    specs = []
    for i in range(10):
        hops = tuple(HopSpec(IPv6Address(f"2001:db8:{0x2100 + i:x}::{h:x}"),
                             asn=64496 if h < 6 else 64700 + i)
                     for h in range(1, 7))
        monitor = MonitorSpec(
            f"m{i}", attach_hop=6, asn=15169 if i < 4 else 64700 + i,
            sample_rate=1.0,
            behaviors=(BehaviorSpec("rdns", DelaySpec("fixed", 60.0),
                                    client_addr=IPv6Address(f"2001:db8:3100::{i + 1:x}")),))
        specs.append(TargetSpec(IPv6Address(f"2001:db8:{0x1100 + i:x}::1"),
                                asn=64700 + i, path=hops, monitors=(monitor,)))
    topology = Topology(tuple(specs))
    tx, batch = _simulate(topology, _config(max_ttl=6, permutation_seed=5),
                          seed=1)
    result = join(tx, batch.detections, batch.responses)
    attribute_all(result.joins, topology.asn_table())
    summary = summarize(result.joins, tx)
    assert summary.counts["rdns"] == 10
    assert summary.diff_asn_fraction("rdns") == 0.4


def test_09_pdns_scan_accepts_only_issued_nonces():
    rng = random.Random(909)
    high_water = 100
    issued = [encode_nonce(KEY, counter) for counter in range(high_water)]
    planted = [PdnsRecord(f"{nonce:016x}.{ZONE.forward_domain}", "PTR",
                          f"resolver-{i}.example.net", 1_000.0 + i,
                          2_000.0 + i, source_tag="feed-a")
               for i, nonce in enumerate(issued)]

    mutated: list[PdnsRecord] = []
    while len(mutated) < 100_000:
        serial = len(mutated)
        nonce = issued[serial % high_water] ^ (1 << rng.randrange(64))
        if is_issued(KEY, high_water, nonce):
            continue
        rrname = address_to_reverse_name(nonce_to_address(PLAN, nonce).address) \
            if serial % 2 else f"{nonce:016x}.{ZONE.forward_domain}"
        mutated.append(PdnsRecord(rrname, "PTR", f"host-{serial}.example.org",
                                  3_000.0 + serial, 4_000.0 + serial,
                                  source_tag="feed-b"))

    assert scan_records(mutated, KEY, PLAN, ZONE, high_water) == []
    found = scan_records(mutated + planted, KEY, PLAN, ZONE, high_water)
    assert len(found) == high_water
    assert {d.nonce for d in found} == set(issued)
    assert all(d.dtype is DetectionType.PDNS for d in found)


def test_10_trace_grid_render_matches_golden():
    first_csv, first_svg = golden_grid()
    second_csv, second_svg = golden_grid()
    assert first_csv == second_csv
    assert first_svg == second_svg
    data = Path(__file__).parent / "data"
    assert first_csv == (data / "trace_grid.csv").read_text()
    assert first_svg == (data / "trace_grid.svg").read_text()
