"""Post-run reporting: tables, figures, and the per-trace grid.

Everything here is a pure function of joined campaign data.  The trace
grid is emitted twice from one source of truth: a CSV describing every
cell, and a vector graphic generated from that CSV, so the two can
never disagree and the graphic is byte-identical across runs.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from ipaddress import IPv6Address
from pathlib import Path
from typing import Iterable, Sequence

from .correlate import (
    AsnTable,
    DetectionJoin,
    ExperimentSummary,
    TimelineRow,
    format_delta,
)

MARKER_NAMES = ("hop_response", "hop_in_dest_asn", "rdns", "pdns", "pcap", "fdns")

# palette and marker geometry are pinned: goldens depend on them
_SQUARE_MARKERS = {
    "hop_response": "#1f77b4",
    "hop_in_dest_asn": "#2ca02c",
}
_CIRCLE_MARKERS = {  # name -> (radius, fill); drawn large to small
    "pcap": (5.5, "#d62728"),
    "pdns": (4.5, "#cc00cc"),
    "fdns": (3.5, "#17becf"),
    "rdns": (2.5, "#ff7f0e"),
}
_CELL = 16
_SQUARE = 11

_DELAY_BUCKET_TOP = 1 << 24  # first power of two above 128 days of seconds


# ---------------------------------------------------------------------------
# tables

def diff_asn_table(summary: ExperimentSummary) -> str:
    """Per-type counts of reactions from outside the destination ASN."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["detection_type", "diff_asn_reactions",
                     "total_reactions", "percent"])
    for dtype in ("rdns", "pcap", "pdns", "fdns"):
        total = summary.counts[dtype]
        fraction = summary.diff_asn_fraction(dtype)
        if fraction is None:
            writer.writerow([dtype, "n/a", total, "n/a"])
        else:
            writer.writerow([dtype, summary.diff_asn_counts[dtype], total,
                             f"{100.0 * fraction:.2f}"])
    return out.getvalue()


def top_asn_table(summary: ExperimentSummary) -> str:
    """Origin ASNs ranked by how many distinct resolvers queried us."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["ns_addrs", "asn"])
    for count, asn in summary.top_rdns_asns:
        writer.writerow([count, asn])
    return out.getvalue()


def summary_text(summary: ExperimentSummary) -> str:
    lines = [
        f"probes sent: {summary.probes_sent}",
        f"targets probed: {summary.targets_probed}",
        f"traces with detection: {summary.traces_with_detection}",
        f"anomalies: {summary.anomalies}",
    ]
    for dtype in ("rdns", "pcap", "pdns", "fdns"):
        count = summary.counts[dtype]
        peers = summary.unique_peers[dtype]
        fraction = summary.diff_asn_fraction(dtype)
        diff = "n/a" if fraction is None else f"{100.0 * fraction:.2f}%"
        lines.append(f"{dtype}: {count} reactions, {peers} unique peers, "
                     f"diff-ASN {diff}")
    if summary.top_rdns_asns:
        ranked = ", ".join(f"AS{asn} ({count})"
                           for count, asn in summary.top_rdns_asns)
        lines.append(f"top rdns ASNs: {ranked}")
    return "\n".join(lines) + "\n"


def format_timeline(rows: Sequence[TimelineRow]) -> str:
    """Three-column event table; detection rows are flagged with '*'."""
    header = ("Delta time", "Event", "ProbeTTL")
    body = [(row.delta, row.text, str(row.ttl), row.flagged) for row in rows]
    width_delta = max([len(header[0])] + [len(b[0]) for b in body])
    width_event = max([len(header[1])] + [len(b[1]) for b in body])
    out = [f"  {header[0]:>{width_delta}}  {header[1]:<{width_event}}  {header[2]}"]
    for delta, text, ttl, flagged in body:
        flag = "* " if flagged else "  "
        out.append(f"{flag}{delta:>{width_delta}}  {text:<{width_event}}  {ttl:>8}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# delay and ttl distributions

def delay_buckets() -> list[float]:
    """Histogram edges: below one second, then doubling out past 128 days."""
    edges = [0.0, 1.0]
    while edges[-1] < _DELAY_BUCKET_TOP:
        edges.append(edges[-1] * 2.0)
    return edges


def bucket_label(low: float, high: float) -> str:
    if low == 0.0:
        return "<1s"
    return format_delta(low)


def delay_histogram_csv(summary: ExperimentSummary) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["detection_type", "bucket_low_s", "bucket_high_s",
                     "label", "count"])
    edges = delay_buckets()
    for dtype in ("rdns", "pcap", "pdns", "fdns"):
        samples = summary.delta_samples[dtype]
        counts = [0] * (len(edges) - 1)
        for value in samples:
            for i in range(len(edges) - 1):
                if edges[i] <= value < edges[i + 1]:
                    counts[i] += 1
                    break
            else:
                counts[-1] += 1
        for i, count in enumerate(counts):
            writer.writerow([dtype, f"{edges[i]:g}", f"{edges[i + 1]:g}",
                             bucket_label(edges[i], edges[i + 1]), count])
    return out.getvalue()


def ttl_histogram_csv(summary: ExperimentSummary) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["detection_type", "ttl", "count"])
    top = max((ttl for samples in summary.ttl_samples.values()
               for ttl in samples), default=0)
    for dtype in ("rdns", "pcap", "pdns", "fdns"):
        counts = [0] * (top + 1)
        for ttl in summary.ttl_samples[dtype]:
            counts[ttl] += 1
        for ttl in range(1, top + 1):
            writer.writerow([dtype, ttl, counts[ttl]])
    return out.getvalue()


_FIGURE_COLORS = {"rdns": "#ff7f0e", "pcap": "#d62728",
                  "pdns": "#cc00cc", "fdns": "#17becf"}


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_delay_figure(summary: ExperimentSummary, path: str | Path) -> None:
    """Counts of detections against time-to-detection, log-bucketed."""
    plt = _pyplot()
    edges = delay_buckets()
    labels = [bucket_label(edges[i], edges[i + 1])
              for i in range(len(edges) - 1)]
    fig, ax = plt.subplots(figsize=(9, 4))
    positions = range(len(labels))
    for dtype in ("rdns", "pcap", "pdns", "fdns"):
        samples = summary.delta_samples[dtype]
        counts = [0] * len(labels)
        for value in samples:
            for i in range(len(edges) - 1):
                if edges[i] <= value < edges[i + 1]:
                    counts[i] += 1
                    break
            else:
                counts[-1] += 1
        label = (f"{dtype} (n={summary.counts[dtype]}, "
                 f"peers={summary.unique_peers[dtype]})")
        ax.step(positions, counts, where="mid", label=label,
                color=_FIGURE_COLORS[dtype])
    ax.set_xticks(list(positions))
    ax.set_xticklabels(labels, rotation=60, ha="right", fontsize=7)
    ax.set_xlabel("time to detection")
    ax.set_ylabel("detections")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def render_ttl_figure(summary: ExperimentSummary, path: str | Path) -> None:
    """Counts of detections against the probe TTL that drew them."""
    plt = _pyplot()
    top = max((ttl for samples in summary.ttl_samples.values()
               for ttl in samples), default=1)
    fig, ax = plt.subplots(figsize=(9, 4))
    ttls = list(range(1, top + 1))
    for dtype in ("rdns", "pcap", "pdns", "fdns"):
        counts = [0] * (top + 1)
        for ttl in summary.ttl_samples[dtype]:
            counts[ttl] += 1
        ax.step(ttls, [counts[t] for t in ttls], where="mid",
                label=f"{dtype} (n={summary.counts[dtype]})",
                color=_FIGURE_COLORS[dtype])
    ax.set_xlabel("probe TTL")
    ax.set_ylabel("detections")
    ax.set_xlim(0.5, top + 0.5)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


# ---------------------------------------------------------------------------
# trace grid

@dataclass(frozen=True)
class TraceGridRow:
    index: int
    target: IPv6Address
    dest_asn: int | None


@dataclass(frozen=True)
class TraceGridCell:
    trace_row: int
    ttl_col: int
    markers: frozenset[str]

    def __post_init__(self) -> None:
        if self.ttl_col < 1:
            raise ValueError("ttl_col must be >= 1")
        unknown = self.markers - set(MARKER_NAMES)
        if unknown:
            raise ValueError(f"unknown markers: {sorted(unknown)}")


@dataclass
class TraceGrid:
    rows: list[TraceGridRow] = field(default_factory=list)
    cells: list[TraceGridCell] = field(default_factory=list)
    max_ttl: int = 1


def build_trace_grid(joins: Iterable[DetectionJoin], table: AsnTable,
                     max_ttl: int | None = None) -> TraceGrid:
    """One row per probed target, columns by TTL, markers from the logs.

    Rows are ordered by destination ASN then target address; unknown
    ASNs sort last.
    """
    joins = list(joins)
    by_target: dict[IPv6Address, list[DetectionJoin]] = {}
    for item in joins:
        by_target.setdefault(item.tx.dst_addr, []).append(item)

    def order(addr: IPv6Address):
        asn = table.lookup(addr)
        return (asn is None, asn if asn is not None else 0, int(addr))

    grid = TraceGrid()
    top_ttl = max_ttl or 1
    markers: dict[tuple[int, int], set[str]] = {}
    for row_index, addr in enumerate(sorted(by_target, key=order)):
        dest_asn = table.lookup(addr)
        grid.rows.append(TraceGridRow(row_index, addr, dest_asn))
        for item in by_target[addr]:
            ttl = item.tx.ttl
            top_ttl = max(top_ttl, ttl)
            cell = markers.setdefault((row_index, ttl), set())
            for response in item.trace_responses:
                responder_asn = table.lookup(response.responder_addr)
                if responder_asn is not None and responder_asn == dest_asn:
                    cell.add("hop_in_dest_asn")
                else:
                    cell.add("hop_response")
            for detection in item.detections:
                cell.add(detection.event.dtype.value)
    grid.max_ttl = top_ttl
    for (row_index, ttl), names in sorted(markers.items()):
        if names:
            grid.cells.append(TraceGridCell(row_index, ttl, frozenset(names)))
    return grid


def grid_to_csv(grid: TraceGrid) -> str:
    """Grid serialization; ttl 0 lines declare rows, others carry cells."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["row", "target", "dest_asn", "ttl", "markers"])
    cells_by_row: dict[int, list[TraceGridCell]] = {}
    for cell in grid.cells:
        cells_by_row.setdefault(cell.trace_row, []).append(cell)
    for row in grid.rows:
        asn = "" if row.dest_asn is None else row.dest_asn
        writer.writerow([row.index, row.target, asn, 0, ""])
        for cell in sorted(cells_by_row.get(row.index, []),
                           key=lambda c: c.ttl_col):
            writer.writerow([row.index, row.target, asn, cell.ttl_col,
                             "|".join(sorted(cell.markers))])
    writer.writerow(["max_ttl", "", "", grid.max_ttl, ""])
    return out.getvalue()


def grid_from_csv(text: str) -> TraceGrid:
    grid = TraceGrid()
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header != ["row", "target", "dest_asn", "ttl", "markers"]:
        raise ValueError("not a trace grid CSV")
    for row_text, target, asn, ttl, markers in reader:
        if row_text == "max_ttl":
            grid.max_ttl = int(ttl)
            continue
        if int(ttl) == 0:
            grid.rows.append(TraceGridRow(int(row_text), IPv6Address(target),
                                          int(asn) if asn else None))
        else:
            grid.cells.append(TraceGridCell(
                int(row_text), int(ttl),
                frozenset(markers.split("|")) if markers else frozenset()))
    return grid


def _svg_marker(x: float, y: float, name: str) -> list[str]:
    if name in _SQUARE_MARKERS:
        half = _SQUARE / 2
        return [f'<rect x="{x - half:g}" y="{y - half:g}" width="{_SQUARE}" '
                f'height="{_SQUARE}" fill="{_SQUARE_MARKERS[name]}"/>']
    radius, fill = _CIRCLE_MARKERS[name]
    return [f'<circle cx="{x:g}" cy="{y:g}" r="{radius:g}" fill="{fill}"/>']


def grid_to_svg(csv_text: str) -> str:
    """Deterministic vector rendering of a trace grid CSV."""
    grid = grid_from_csv(csv_text)
    left, top, right = 40, 28, 96
    bottom = 64
    width = left + grid.max_ttl * _CELL + right
    height = top + max(len(grid.rows), 1) * _CELL + bottom
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
        '<g font-family="monospace" font-size="9" fill="#333333">',
    ]

    def cell_center(row: int, ttl: int) -> tuple[float, float]:
        return (left + (ttl - 0.5) * _CELL, top + (row + 0.5) * _CELL)

    step = 1 if grid.max_ttl <= 24 else 5
    ticks = [1] + [t for t in range(step, grid.max_ttl + 1, step) if t > 1]
    grid_bottom = top + len(grid.rows) * _CELL
    for ttl in ticks:
        x = left + (ttl - 0.5) * _CELL
        parts.append(f'<text x="{x:g}" y="{grid_bottom + 14}" '
                     f'text-anchor="middle">{ttl}</text>')
    parts.append(f'<text x="{left + grid.max_ttl * _CELL / 2:g}" '
                 f'y="{grid_bottom + 30}" text-anchor="middle">probe TTL'
                 '</text>')

    # faint row guides
    for row in grid.rows:
        y = top + (row.index + 0.5) * _CELL
        parts.append(f'<line x1="{left}" y1="{y:g}" '
                     f'x2="{left + grid.max_ttl * _CELL}" y2="{y:g}" '
                     'stroke="#eeeeee" stroke-width="1"/>')

    # ASN dividers on the right axis
    divider_x = left + grid.max_ttl * _CELL + 6
    groups: list[tuple[int | None, int, int]] = []
    for row in grid.rows:
        if groups and groups[-1][0] == row.dest_asn:
            groups[-1] = (row.dest_asn, groups[-1][1], row.index)
        else:
            groups.append((row.dest_asn, row.index, row.index))
    for asn, first, last in groups:
        y0, y1 = top + first * _CELL, top + (last + 1) * _CELL
        label = "AS?" if asn is None else f"AS{asn}"
        parts.append(f'<line x1="{divider_x}" y1="{y0:g}" x2="{divider_x}" '
                     f'y2="{y1:g}" stroke="#888888" stroke-width="1"/>')
        parts.append(f'<line x1="{divider_x - 3}" y1="{y0:g}" '
                     f'x2="{divider_x + 3}" y2="{y0:g}" '
                     'stroke="#888888" stroke-width="1"/>')
        parts.append(f'<line x1="{divider_x - 3}" y1="{y1:g}" '
                     f'x2="{divider_x + 3}" y2="{y1:g}" '
                     'stroke="#888888" stroke-width="1"/>')
        parts.append(f'<text x="{divider_x + 7}" '
                     f'y="{(y0 + y1) / 2 + 3:g}">{label}</text>')

    # markers: squares beneath circles, larger circles beneath smaller
    cells = sorted(grid.cells, key=lambda c: (c.trace_row, c.ttl_col))
    for name in ("hop_response", "hop_in_dest_asn"):
        for cell in cells:
            if name in cell.markers:
                x, y = cell_center(cell.trace_row, cell.ttl_col)
                parts.extend(_svg_marker(x, y, name))
    for name in ("pcap", "pdns", "fdns", "rdns"):
        for cell in cells:
            if name in cell.markers:
                x, y = cell_center(cell.trace_row, cell.ttl_col)
                parts.extend(_svg_marker(x, y, name))

    # legend
    legend_y = grid_bottom + 46
    x = left
    for name in MARKER_NAMES:
        parts.extend(_svg_marker(x + 6, legend_y, name))
        parts.append(f'<text x="{x + 14}" y="{legend_y + 3:g}">{name}</text>')
        x += 14 + 8 * len(name) + 16
    parts.append("</g>")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_trace_grid(joins: Iterable[DetectionJoin], table: AsnTable,
                      csv_path: str | Path, svg_path: str | Path,
                      max_ttl: int | None = None) -> TraceGrid:
    """Write the grid CSV and the graphic generated from that CSV."""
    grid = build_trace_grid(joins, table, max_ttl=max_ttl)
    csv_text = grid_to_csv(grid)
    Path(csv_path).write_text(csv_text)
    Path(svg_path).write_text(grid_to_svg(csv_text))
    return grid
