from ipaddress import IPv6Address, IPv6Network

import pytest

from noncewatch.correlate import (
    AsnTable,
    TimelineRow,
    attribute_all,
    join,
    summarize,
)
from noncewatch.detect import DetectionEvent, DetectionType, ResponseKind, TraceResponse
from noncewatch.packets import TransmissionRecord
from noncewatch.report import (
    MARKER_NAMES,
    TraceGridCell,
    build_trace_grid,
    bucket_label,
    delay_buckets,
    delay_histogram_csv,
    diff_asn_table,
    format_timeline,
    grid_from_csv,
    grid_to_csv,
    grid_to_svg,
    render_delay_figure,
    render_trace_grid,
    render_ttl_figure,
    summary_text,
    top_asn_table,
    ttl_histogram_csv,
)

SRC = IPv6Address("2001:db8::1")
TARGET_A = IPv6Address("2001:db8:f00d::1")
TARGET_B = IPv6Address("2001:db8:beef::1")
HOP_TRANSIT = IPv6Address("2001:db8:aaaa::1")
HOP_DEST = IPv6Address("2001:db8:f00d::fe")
PEER = IPv6Address("2001:4860::8888")


def table():
    t = AsnTable()
    t.add(IPv6Network("2001:db8:f00d::/48"), 64500)
    t.add(IPv6Network("2001:db8:beef::/48"), 64400)
    t.add(IPv6Network("2001:db8:aaaa::/48"), 64496)
    t.add(IPv6Network("2001:4860::/32"), 15169)
    return t


def tx(nonce, ttl, dst=TARGET_A, ts=0.0):
    return TransmissionRecord(ts, nonce, SRC, dst, ttl, "udp", 50000, 443)


def det(nonce, dtype=DetectionType.RDNS, peer=PEER, ts=600.0, evidence="q"):
    return DetectionEvent(ts, dtype, nonce, peer, evidence)


def resp(nonce, responder=HOP_TRANSIT, ts=0.1, ahl=60):
    return TraceResponse(ts, nonce, responder, ResponseKind.HOP_LIMIT_EXCEEDED,
                         ahl)


def joined(records, detections=(), responses=()):
    result = join(records, list(detections), list(responses))
    attribute_all(result.joins, table())
    return result.joins


def example_summary():
    records = [tx(1, 2), tx(2, 3), tx(3, 4, dst=TARGET_B)]
    detections = [
        det(1, DetectionType.RDNS, PEER, 600.0),
        det(2, DetectionType.RDNS, IPv6Address("2001:db8:f00d::53"), 700.0),
        det(3, DetectionType.PCAP, PEER, 800.0),
        det(3, DetectionType.PDNS, None, 86400.0),
    ]
    return summarize(joined(records, detections), records)


def test_diff_asn_table_layout():
    text = example_summary()
    out = diff_asn_table(text)
    lines = out.splitlines()
    assert lines[0] == "detection_type,diff_asn_reactions,total_reactions,percent"
    assert lines[1] == "rdns,1,2,50.00"
    assert lines[2] == "pcap,1,1,100.00"
    assert lines[3] == "pdns,n/a,1,n/a"
    assert lines[4] == "fdns,n/a,0,n/a"


def test_top_asn_table_layout():
    out = top_asn_table(example_summary())
    assert out.splitlines() == ["ns_addrs,asn", "1,15169", "1,64500"]


def test_summary_text_mentions_each_type():
    text = summary_text(example_summary())
    assert "probes sent: 3" in text
    assert "traces with detection: 2" in text
    assert "rdns: 2 reactions, 2 unique peers, diff-ASN 50.00%" in text
    assert "pdns: 1 reactions, 0 unique peers, diff-ASN n/a" in text
    assert "top rdns ASNs: AS15169 (1), AS64500 (1)" in text


def test_format_timeline_flags_detections():
    rows = [
        TimelineRow(0.0, 0.0, "tr probe sent to target", 26, False),
        TimelineRow(0.24, 0.24, "tr hop response", 26, False),
        TimelineRow(547.0, 547.0, "RDNS query on noncedAddr by target's network",
                    10, True),
    ]
    text = format_timeline(rows)
    lines = text.splitlines()
    assert lines[0].split() == ["Delta", "time", "Event", "ProbeTTL"]
    assert lines[1].startswith("  ")
    assert "0s" in lines[1] and "tr probe sent to target" in lines[1]
    assert lines[3].startswith("* ")
    assert "9m 7s" in lines[3]
    assert lines[3].rstrip().endswith("10")


def test_delay_buckets_shape():
    edges = delay_buckets()
    assert edges[0] == 0.0
    assert edges[1] == 1.0
    assert edges[-1] == float(1 << 24)
    assert edges[-2] == float(1 << 23)
    # doubling all the way up
    for low, high in zip(edges[2:], edges[3:]):
        assert high == 2 * low
    assert bucket_label(0.0, 1.0) == "<1s"
    assert bucket_label(1.0, 2.0) == "1s"
    assert bucket_label(512.0, 1024.0) == "8m 32s"
    assert bucket_label(float(1 << 23), float(1 << 24)) == "97d 2h"


def test_delay_histogram_counts():
    out = delay_histogram_csv(example_summary())
    rows = [line.split(",") for line in out.splitlines()[1:]]
    rdns_rows = [r for r in rows if r[0] == "rdns"]
    bucket = next(r for r in rdns_rows if r[1] == "512")
    assert bucket[3] == "8m 32s"
    assert bucket[4] == "2"  # deltas 600 and 700
    assert sum(int(r[4]) for r in rdns_rows) == 2
    pdns_day = next(r for r in rows if r[0] == "pdns" and int(r[4]) > 0)
    assert float(pdns_day[1]) <= 86400.0 < float(pdns_day[2])


def test_ttl_histogram_counts():
    out = ttl_histogram_csv(example_summary())
    rows = [line.split(",") for line in out.splitlines()[1:]]
    assert ["rdns", "2", "1"] in rows
    assert ["rdns", "3", "1"] in rows
    assert ["pcap", "4", "1"] in rows
    assert ["pdns", "4", "1"] in rows
    assert all(r[0] != "fdns" or r[2] == "0" for r in rows)


def test_grid_rdns_circles_no_dest_squares():
    # responsive transit hops only, rdns reactions at hops 9..11
    records = [tx(n, ttl) for n, ttl in ((1, 9), (2, 10), (3, 11))]
    detections = [det(n, DetectionType.RDNS, PEER, 600.0 + n) for n in (1, 2, 3)]
    grid = build_trace_grid(joined(records, detections), table())
    assert len(grid.rows) == 1
    cols = {cell.ttl_col: cell.markers for cell in grid.cells}
    assert set(cols) == {9, 10, 11}
    assert all(markers == {"rdns"} for markers in cols.values())
    assert not any("hop_in_dest_asn" in m for m in cols.values())


def test_grid_squares_for_silent_trace():
    records = [tx(1, 1), tx(2, 2)]
    responses = [resp(1, HOP_TRANSIT, 0.1), resp(2, HOP_DEST, 0.2)]
    grid = build_trace_grid(joined(records, (), responses), table())
    cols = {cell.ttl_col: cell.markers for cell in grid.cells}
    assert cols[1] == {"hop_response"}
    assert cols[2] == {"hop_in_dest_asn"}


def test_grid_rows_ordered_by_asn_then_address():
    records = [tx(1, 1, dst=TARGET_A), tx(2, 1, dst=TARGET_B)]
    grid = build_trace_grid(joined(records, [det(1), det(2)]), table())
    # TARGET_B's ASN 64400 sorts before TARGET_A's 64500
    assert [row.target for row in grid.rows] == [TARGET_B, TARGET_A]
    assert [row.dest_asn for row in grid.rows] == [64400, 64500]


def test_grid_cell_validation():
    with pytest.raises(ValueError):
        TraceGridCell(0, 0, frozenset({"rdns"}))
    with pytest.raises(ValueError):
        TraceGridCell(0, 1, frozenset({"sparkles"}))


def test_grid_csv_roundtrip():
    records = [tx(1, 2), tx(2, 5), tx(3, 3, dst=TARGET_B)]
    detections = [det(1), det(3, DetectionType.PCAP)]
    responses = [resp(2, HOP_DEST)]
    grid = build_trace_grid(joined(records, detections, responses), table(),
                            max_ttl=16)
    text = grid_to_csv(grid)
    back = grid_from_csv(text)
    assert back.rows == grid.rows
    assert back.cells == grid.cells
    assert back.max_ttl == 16


def test_grid_csv_declares_rows_before_cells():
    records = [tx(1, 2)]
    grid = build_trace_grid(joined(records, (), [resp(1)]), table())
    text = grid_to_csv(grid)
    lines = text.splitlines()
    assert lines[1] == f"0,{TARGET_A},64500,0,"
    assert lines[2] == f"0,{TARGET_A},64500,2,hop_response"
    assert grid_from_csv(text).rows[0].target == TARGET_A


def test_svg_matches_csv_content():
    records = [tx(1, 2), tx(2, 4)]
    detections = [det(1, DetectionType.RDNS), det(2, DetectionType.PCAP)]
    responses = [resp(1, HOP_DEST, 0.1)]
    grid = build_trace_grid(joined(records, detections, responses), table())
    text = grid_to_csv(grid)
    svg = grid_to_svg(text)
    assert svg.count('fill="#ff7f0e"') == 2  # one rdns cell + legend swatch
    assert svg.count('fill="#d62728"') == 2
    assert svg.count('fill="#2ca02c"') == 2
    assert svg.count('fill="#1f77b4"') == 1  # legend only
    assert "AS64500" in svg
    for name in MARKER_NAMES:
        assert f">{name}<" in svg


def test_svg_is_deterministic():
    records = [tx(n, 1 + n % 7, dst=TARGET_A if n % 2 else TARGET_B)
               for n in range(1, 30)]
    detections = [det(n, DetectionType.RDNS, PEER, 600.0 + n)
                  for n in range(1, 30, 3)]
    grid = build_trace_grid(joined(records, detections), table())
    text = grid_to_csv(grid)
    assert grid_to_svg(text) == grid_to_svg(text)


def test_render_trace_grid_files(tmp_path):
    records = [tx(1, 2)]
    csv_path = tmp_path / "grid.csv"
    svg_path = tmp_path / "grid.svg"
    render_trace_grid(joined(records, [det(1)]), table(), csv_path, svg_path)
    csv_text = csv_path.read_text()
    assert svg_path.read_text() == grid_to_svg(csv_text)
    assert csv_text.startswith("row,target,dest_asn,ttl,markers\n")


def test_figures_render_and_repeat(tmp_path):
    summary = example_summary()
    first, second = tmp_path / "delay_a.png", tmp_path / "delay_b.png"
    render_delay_figure(summary, first)
    render_delay_figure(summary, second)
    assert first.stat().st_size > 1000
    assert first.read_bytes() == second.read_bytes()
    ttl_a, ttl_b = tmp_path / "ttl_a.png", tmp_path / "ttl_b.png"
    render_ttl_figure(summary, ttl_a)
    render_ttl_figure(summary, ttl_b)
    assert ttl_a.read_bytes() == ttl_b.read_bytes()
