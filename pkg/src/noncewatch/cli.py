"""Operator commands tying the pipeline together.

One key=value config file names the campaign and its inputs; every
command reads it via --config or the NONCEWATCH_CONFIG environment
variable and drops artifacts under <runs_dir>/<campaign_id>/.
Relative paths in the config resolve against the config file's
directory.

Pipeline order: keygen -> plan -> send (or simulate) -> listen ->
ingest-pdns -> correlate -> report.  simulate chains send, listen,
ingest-pdns, and correlate against the simulated network in one pass.
"""

from __future__ import annotations

import argparse
import itertools
import os
import sys
from collections import Counter
from ipaddress import IPv6Address
from pathlib import Path

from .correlate import (
    AsnTable,
    AsnTableError,
    attribute_all,
    build_timeline,
    eavesdrop_candidates,
    join,
    summarize,
)
from .detect import DetectionEvent, TraceResponse, run_detection
from .dnswire import DnsQueryEvent, ZoneConfig
from .nonces import (
    MASK64,
    AddressPlan,
    KeyFileError,
    NonceKey,
    decode_nonce,
    nonce_to_address,
)
from .packets import (
    ICMP6_TIME_EXCEEDED,
    CaptureStats,
    FrameWriter,
    RawSocketTransport,
    TransmissionRecord,
    TsvLog,
    capture_loop,
    parse_frame,
    read_frames,
    send_campaign,
)
from .pdns import IngestState, read_pdns_file, scan_records
from .report import (
    delay_histogram_csv,
    diff_asn_table,
    format_timeline,
    render_delay_figure,
    render_trace_grid,
    render_ttl_figure,
    summary_text,
    top_asn_table,
    ttl_histogram_csv,
)
from .scheduling import (
    CampaignConfig,
    ConfigError,
    EmptyTargetListError,
    FillTracker,
    plan_probes,
    read_config,
    read_targets,
)
from .simnet import InvalidTopology, SimNetwork, Topology, read_topology

TX_LOG = "transmissions.tsv"
FRAME_LOG = "frames.bin"
DNS_LOG = "dns_queries.tsv"
PDNS_FEED = "pdns_feed.ndjson"
RESPONSE_LOG = "responses.tsv"
DETECTION_LOG = "detections.tsv"
JOIN_LOG = "joined_detections.tsv"
PDNS_STATE = "pdns_state.txt"
ASN_TABLE = "asn_table.txt"
GROUND_TRUTH = "ground_truth.tsv"
PLAN_PREVIEW = "plan_preview.tsv"
SUMMARY = "summary.txt"
EAVESDROP = "eavesdrop.txt"
REPORT_DIR = "report"


class CliError(Exception):
    """Anything the operator must fix: config, inputs, permissions."""


class Settings:
    """Parsed config file plus path resolution and typed accessors."""

    def __init__(self, path: Path):
        self.path = path
        self.base = path.resolve().parent
        try:
            self.mapping = read_config(path)
        except OSError as exc:
            raise CliError(f"cannot read config {path}: {exc}") from None

    def get(self, key: str, default: str | None = None) -> str | None:
        return self.mapping.get(key, default)

    def require(self, key: str) -> str:
        try:
            return self.mapping[key]
        except KeyError:
            raise CliError(f"{self.path}: missing config key {key!r}") from None

    def resolve(self, value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else self.base / p

    def path_for(self, key: str) -> Path:
        return self.resolve(self.require(key))

    def intval(self, key: str, default: str) -> int:
        text = self.get(key, default)
        try:
            return int(text, 0)
        except ValueError:
            raise CliError(f"{self.path}: {key} is not an integer: {text!r}") from None

    @property
    def run_dir(self) -> Path:
        runs = self.resolve(self.get("runs_dir", "runs"))
        return runs / self.require("campaign_id")

    def key(self) -> NonceKey:
        return NonceKey.load(self.path_for("key_file"))

    def plan(self) -> AddressPlan:
        try:
            return AddressPlan.parse(self.require("prefix"),
                                     self.intval("subnet_pad", "0"))
        except ValueError as exc:
            raise CliError(f"{self.path}: bad prefix: {exc}") from None

    def zone(self, plan: AddressPlan) -> ZoneConfig:
        return ZoneConfig.from_plan(plan, self.require("forward_domain"),
                                    answer_ttl=self.intval("dns_answer_ttl", "300"))

    def campaign(self) -> CampaignConfig:
        return CampaignConfig.from_mapping(self.mapping, self.key(), self.plan())

    def targets(self) -> list[IPv6Address]:
        return read_targets(self.path_for("targets_file"))

    def topology(self) -> Topology:
        return read_topology(self.path_for("topology_file"))

    def asn_table(self) -> AsnTable:
        value = self.get("asn_table_file")
        if value is not None:
            return AsnTable.from_file(self.resolve(value))
        derived = self.run_dir / ASN_TABLE
        if derived.exists():
            return AsnTable.from_file(derived)
        return AsnTable()


def _load_settings(args: argparse.Namespace) -> Settings:
    value = args.config or os.environ.get("NONCEWATCH_CONFIG")
    if not value:
        raise CliError("no config file: pass --config or set NONCEWATCH_CONFIG")
    path = Path(value)
    if not path.is_file():
        raise CliError(f"config file not found: {path}")
    return Settings(path)


def _read_log(path: Path, record_type) -> list:
    try:
        return TsvLog(path, record_type).records()
    except ValueError as exc:
        raise CliError(f"{path}: bad record: {exc}") from None


def _high_water(key: NonceKey, tx_records: list[TransmissionRecord]) -> int:
    return 1 + max((decode_nonce(key, r.nonce) for r in tx_records), default=-1)


def _clean(run_dir: Path, names: tuple[str, ...]) -> None:
    for name in names:
        path = run_dir / name
        if path.exists():
            path.unlink()


# ---------------------------------------------------------------------------
# keygen / plan

def cmd_keygen(args: argparse.Namespace) -> int:
    if args.out:
        out = Path(args.out)
    else:
        out = _load_settings(args).path_for("key_file")
    if out.exists() and not args.force:
        raise CliError(f"{out}: exists (use --force to overwrite)")
    out.parent.mkdir(parents=True, exist_ok=True)
    key = NonceKey.generate(key_id=args.key_id)
    key.save(out)
    print(f"wrote key id {key.key_id} to {out}")
    return 0


def cmd_plan(args: argparse.Namespace) -> int:
    settings = _load_settings(args)
    campaign = settings.campaign()
    targets = settings.targets()
    total = len(targets) * campaign.max_ttl
    run_dir = settings.run_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    lines = ["seq\ttarget\tttl\tnonce\tsrc_addr\tsport\tdport"]
    for spec in itertools.islice(plan_probes(targets, campaign), args.limit):
        src = nonce_to_address(campaign.plan, spec.nonce).address
        lines.append(f"{spec.sequence_index}\t{spec.target}\t{spec.ttl}"
                     f"\t{spec.nonce:016x}\t{src}\t{spec.src_port}\t{spec.dst_port}")
    out = run_dir / PLAN_PREVIEW
    out.write_text("\n".join(lines) + "\n")
    print(f"campaign {settings.require('campaign_id')}: {len(targets)} targets"
          f" x max_ttl {campaign.max_ttl} = {total} probes ({campaign.mode.value})")
    print(f"first {min(args.limit, total)} specs written to {out}")
    for line in lines[:1 + min(args.limit, 10)]:
        print(line)
    return 0


# ---------------------------------------------------------------------------
# send

def _parse_mac(text: str) -> bytes:
    try:
        mac = bytes.fromhex(text.replace(":", "").replace("-", ""))
    except ValueError:
        raise CliError(f"bad link-layer address: {text!r}") from None
    if len(mac) != 6:
        raise CliError(f"bad link-layer address: {text!r}")
    return mac


def _run_simnet_campaign(settings: Settings, campaign: CampaignConfig,
                         targets: list[IPv6Address]):
    """Send the whole campaign (plus fill rounds) through the simulator."""
    topology = settings.topology()
    zone = settings.zone(campaign.plan)
    sim_seed = settings.intval("sim_seed", "1")
    run_dir = settings.run_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    _clean(run_dir, (TX_LOG, FRAME_LOG, DNS_LOG, PDNS_FEED, RESPONSE_LOG,
                     DETECTION_LOG, JOIN_LOG, PDNS_STATE, SUMMARY, EAVESDROP))
    sink = TsvLog(run_dir / TX_LOG, TransmissionRecord)
    specs = list(plan_probes(targets, campaign))
    issued = [len(specs)]
    network = SimNetwork(topology, zone, campaign.key, campaign.plan,
                         high_water=lambda: issued[0], seed=sim_seed)
    summary = send_campaign(specs, campaign, network, sink, clock=network.clock)
    fill_sent = _fill_rounds(network, campaign, sink, issued, specs)
    result = network.finalize()
    result.send_summary = summary

    with (run_dir / FRAME_LOG).open("wb") as fh:
        writer = FrameWriter(fh)
        for when, wire in result.frames:
            writer.write(when, wire)
    TsvLog(run_dir / DNS_LOG, DnsQueryEvent).append_all(result.dns_events)
    (run_dir / PDNS_FEED).write_text(
        "".join(record.to_json() + "\n" for record in result.pdns_records))
    (run_dir / ASN_TABLE).write_text(topology.asn_table().to_lines())
    truth_lines = [
        f"{t.name}\t{t.target}\t{t.attach_hop}\t{t.asn}"
        f"\t{','.join(str(a) for a in sorted(t.acting_addrs))}"
        f"\t{','.join(sorted(t.source_tags))}"
        for t in topology.ground_truth().values()]
    (run_dir / GROUND_TRUTH).write_text("".join(line + "\n" for line in truth_lines))
    return result, fill_sent


def _fill_rounds(network: SimNetwork, campaign: CampaignConfig,
                 sink: TsvLog, issued: list[int], specs: list) -> int:
    """Extend responsive traces past max_ttl until responses dry up."""
    if not campaign.fill_mode:
        return 0
    tracker = FillTracker(campaign)
    sent_specs = {spec.nonce: spec for spec in specs}
    counters = itertools.count(issued[0])

    def next_counter() -> int:
        value = next(counters)
        issued[0] = value + 1
        return value

    sent = 0
    while True:
        snapshot = network.capture_snapshot()
        latest = max((when for when, _ in snapshot), default=0.0)
        if latest > network.clock.now():
            network.clock.sleep(latest - network.clock.now())
        for when, wire in snapshot:
            try:
                pkt = parse_frame(wire)
            except ValueError:
                continue
            if pkt.icmp_type != ICMP6_TIME_EXCEEDED or pkt.quoted is None:
                continue
            spec = sent_specs.get(int(pkt.quoted.src) & MASK64)
            if spec is not None:
                tracker.record_response(spec.target, spec.ttl, when)
        due = tracker.poll(network.clock.now(), next_counter)
        if due:
            sent_specs.update({spec.nonce: spec for spec in due})
            sent += send_campaign(due, campaign, network, sink,
                                  clock=network.clock).sent
            continue
        if tracker.active:
            network.clock.sleep(campaign.fill_timeout_s + 1e-3)
            continue
        return sent


def cmd_send(args: argparse.Namespace) -> int:
    settings = _load_settings(args)
    campaign = settings.campaign()
    targets = settings.targets()
    if args.simnet:
        result, fill_sent = _run_simnet_campaign(settings, campaign, targets)
        summary = result.send_summary
        print(f"sent {summary.sent} probes (+{fill_sent} fill)"
              f" in {summary.elapsed_s:.3f}s virtual")
        print(f"network: {result.stats.responses} responses,"
              f" {result.stats.observations} monitor observations,"
              f" {result.stats.reactions} reactions")
        print(f"raw products in {settings.run_dir}")
        return 0
    if not (args.interface and args.gateway_mac and args.source_mac):
        raise CliError("live send needs --interface, --gateway-mac, --source-mac"
                       " (or pass --simnet)")
    run_dir = settings.run_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    _clean(run_dir, (TX_LOG,))
    transport = RawSocketTransport(args.interface, _parse_mac(args.gateway_mac),
                                   _parse_mac(args.source_mac))
    try:
        summary = send_campaign(plan_probes(targets, campaign), campaign,
                                transport, TsvLog(run_dir / TX_LOG, TransmissionRecord))
    finally:
        transport.close()
    print(f"sent {summary.sent} probes, {summary.failed} failed,"
          f" {summary.achieved_pps:.0f} pps")
    for warning in summary.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return 0 if summary.failed == 0 else 1


# ---------------------------------------------------------------------------
# listen / ingest-pdns

def _detect_phase(settings: Settings, frames_path: Path,
                  dns_path: Path) -> tuple:
    key = settings.key()
    plan = settings.plan()
    zone = settings.zone(plan)
    run_dir = settings.run_dir
    tx_records = _read_log(run_dir / TX_LOG, TransmissionRecord)
    high_water = _high_water(key, tx_records)
    target_set = {record.dst_addr for record in tx_records}
    dns_events = _read_log(dns_path, DnsQueryEvent)
    stats = CaptureStats()

    def frames():
        if not frames_path.exists():
            return
        with frames_path.open("rb") as fh:
            yield from read_frames(fh)

    packets = capture_loop(frames(), plan, stats=stats)
    batch = run_detection(packets, dns_events, key, plan, high_water,
                          target_set, zone)
    _clean(run_dir, (RESPONSE_LOG, DETECTION_LOG, PDNS_STATE))
    TsvLog(run_dir / RESPONSE_LOG, TraceResponse).append_all(batch.responses)
    TsvLog(run_dir / DETECTION_LOG, DetectionEvent).append_all(batch.detections)
    return batch, stats


def cmd_listen(args: argparse.Namespace) -> int:
    settings = _load_settings(args)
    run_dir = settings.run_dir
    frames_path = Path(args.frames) if args.frames else run_dir / FRAME_LOG
    dns_path = Path(args.dns_log) if args.dns_log else run_dir / DNS_LOG
    batch, stats = _detect_phase(settings, frames_path, dns_path)
    by_type = Counter(d.dtype.value for d in batch.detections)
    print(f"capture: {stats.matched} frames kept, {stats.ignored} ignored,"
          f" {stats.malformed} malformed")
    print(f"responses: {len(batch.responses)}")
    print(f"detections: {len(batch.detections)}"
          f" ({', '.join(f'{k}={v}' for k, v in sorted(by_type.items())) or 'none'})")
    return 0


def _ingest_phase(settings: Settings, paths: list[Path]) -> tuple[int, int, list[str]]:
    key = settings.key()
    plan = settings.plan()
    zone = settings.zone(plan)
    run_dir = settings.run_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    high_water = _high_water(key, _read_log(run_dir / TX_LOG, TransmissionRecord))
    state = IngestState(run_dir / PDNS_STATE)
    records = []
    errors: list[str] = []
    for path in paths:
        if not path.is_file():
            raise CliError(f"feed file not found: {path}")
        found, bad = read_pdns_file(path)
        records.extend(found)
        errors.extend(bad)
    detections = scan_records(records, key, plan, zone, high_water, state)
    TsvLog(run_dir / DETECTION_LOG, DetectionEvent).append_all(detections)
    state.save()
    return len(records), len(detections), errors


def cmd_ingest_pdns(args: argparse.Namespace) -> int:
    settings = _load_settings(args)
    if args.feeds:
        paths = [Path(p) for p in args.feeds]
    else:
        default = settings.run_dir / PDNS_FEED
        if not default.exists():
            raise CliError(f"no feed files given and {default} does not exist")
        paths = [default]
    scanned, new, errors = _ingest_phase(settings, paths)
    for error in errors:
        print(f"warning: {error}", file=sys.stderr)
    print(f"scanned {scanned} records from {len(paths)} feed(s):"
          f" {new} new pdns detections, {len(errors)} malformed lines")
    return 0


# ---------------------------------------------------------------------------
# correlate

def _correlate_phase(settings: Settings):
    run_dir = settings.run_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    tx_records = _read_log(run_dir / TX_LOG, TransmissionRecord)
    detections = _read_log(run_dir / DETECTION_LOG, DetectionEvent)
    responses = _read_log(run_dir / RESPONSE_LOG, TraceResponse)
    table = settings.asn_table()
    result = join(tx_records, detections, responses)
    attribute_all(result.joins, table)
    anomalies = (len(result.unknown_detections) + len(result.unknown_responses)
                 + len(result.negative_delta_detections))
    summary = summarize(result.joins, tx_records, anomalies=anomalies)
    candidates = eavesdrop_candidates(
        result.joins, table,
        ttl_threshold=settings.intval("eavesdrop_ttl_threshold", "4"),
        source_asn=(settings.intval("source_asn", "0")
                    if settings.get("source_asn") is not None else None))
    return result, summary, candidates, table, tx_records


def _write_join_log(path: Path, joins) -> None:
    lines = []
    for item in joins:
        for detection in item.detections:
            peer = detection.event.peer_addr
            lines.append("\t".join([
                f"{item.nonce:016x}", str(item.tx.dst_addr), str(item.tx.ttl),
                detection.event.dtype.value, f"{detection.delta_time:.6f}",
                "-" if peer is None else str(peer),
                "-" if detection.peer_asn is None else str(detection.peer_asn),
                "-" if detection.diff_asn is None else str(detection.diff_asn).lower(),
            ]))
    path.write_text("".join(line + "\n" for line in lines))


def _write_eavesdrop(path: Path, candidates) -> None:
    blocks = []
    for candidate in candidates:
        peers = ", ".join(dict.fromkeys(
            f"{addr} (AS{asn})" for addr, asn in candidate.flagged_peers))
        lines = [f"target {candidate.join.tx.dst_addr}"
                 f" nonce {candidate.join.nonce:016x}"
                 f" ttl_bound {candidate.bound}",
                 f"  peers: {peers}"]
        lines.extend(f"  {note}" for note in candidate.evidence)
        blocks.append("\n".join(lines))
    path.write_text("".join(block + "\n" for block in blocks))


def cmd_correlate(args: argparse.Namespace) -> int:
    settings = _load_settings(args)
    result, summary, candidates, _, _ = _correlate_phase(settings)
    run_dir = settings.run_dir
    _write_join_log(run_dir / JOIN_LOG, result.joins)
    (run_dir / SUMMARY).write_text(summary_text(summary))
    _write_eavesdrop(run_dir / EAVESDROP, candidates)
    print(summary_text(summary), end="")
    print(f"eavesdrop candidates: {len(candidates)}")
    return 0


# ---------------------------------------------------------------------------
# simulate / report

def cmd_simulate(args: argparse.Namespace) -> int:
    settings = _load_settings(args)
    campaign = settings.campaign()
    topology = settings.topology()
    if settings.get("targets_file") is not None:
        targets = settings.targets()
    else:
        targets = [target.address for target in topology.targets]
    result, fill_sent = _run_simnet_campaign(settings, campaign, targets)
    run_dir = settings.run_dir
    batch, stats = _detect_phase(settings, run_dir / FRAME_LOG, run_dir / DNS_LOG)
    feed = run_dir / PDNS_FEED
    _, pdns_new, _ = _ingest_phase(settings, [feed] if feed.exists() else [])
    joined, summary, candidates, _, _ = _correlate_phase(settings)
    _write_join_log(run_dir / JOIN_LOG, joined.joins)
    (run_dir / SUMMARY).write_text(summary_text(summary))
    _write_eavesdrop(run_dir / EAVESDROP, candidates)

    sent = result.send_summary.sent if result.send_summary else 0
    print(f"sent {sent} probes (+{fill_sent} fill) into {len(topology.targets)}"
          f" simulated paths")
    print(f"network: {result.stats.responses} responses,"
          f" {result.stats.reactions} reactions,"
          f" {result.stats.probes_lost} probes to unknown targets")
    print(f"capture: {stats.matched} frames kept; responses {len(batch.responses)};"
          f" detections {len(batch.detections)} + {pdns_new} pdns")
    print(summary_text(summary), end="")
    print(f"eavesdrop candidates: {len(candidates)}")
    print(f"artifacts in {run_dir}")
    return 0


def _timeline_name(target: IPv6Address) -> str:
    return f"timeline_{str(target).replace(':', '-')}.txt"


def cmd_report(args: argparse.Namespace) -> int:
    settings = _load_settings(args)
    result, summary, candidates, table, _ = _correlate_phase(settings)
    run_dir = settings.run_dir
    out_dir = run_dir / REPORT_DIR
    out_dir.mkdir(parents=True, exist_ok=True)
    max_ttl = (settings.intval("max_ttl", "0")
               if settings.get("max_ttl") is not None else None)

    (out_dir / "summary.txt").write_text(summary_text(summary))
    (out_dir / "diff_asn.csv").write_text(diff_asn_table(summary))
    (out_dir / "top_asns.csv").write_text(top_asn_table(summary))
    (out_dir / "delay_hist.csv").write_text(delay_histogram_csv(summary))
    (out_dir / "ttl_hist.csv").write_text(ttl_histogram_csv(summary))
    render_delay_figure(summary, out_dir / "delay_hist.png")
    render_ttl_figure(summary, out_dir / "ttl_hist.png")
    render_trace_grid(result.joins, table, out_dir / "trace_grid.csv",
                      out_dir / "trace_grid.svg", max_ttl=max_ttl)

    if args.target:
        try:
            wanted = [IPv6Address(args.target)]
        except ValueError:
            raise CliError(f"bad --target address: {args.target!r}") from None
    else:
        wanted = sorted({item.tx.dst_addr for item in result.joins
                         if item.detections})
    timelines = 0
    for target in wanted:
        rows = build_timeline(target, result.joins)
        if not rows:
            continue
        (out_dir / _timeline_name(target)).write_text(format_timeline(rows) + "\n")
        timelines += 1
    print(f"report written to {out_dir}")
    print("  tables: diff_asn.csv top_asns.csv delay_hist.csv ttl_hist.csv")
    print("  figures: delay_hist.png ttl_hist.png trace_grid.svg (+csv)")
    print(f"  timelines: {timelines}")
    return 0


# ---------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="noncewatch",
        description="Disseminate encrypted nonces in IPv6 source addresses"
                    " and find out who acted on them.")
    parser.add_argument("--config", "-c",
                        help="key=value config file (or set NONCEWATCH_CONFIG)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="generate a nonce encryption key file")
    p.add_argument("--out", help="key file path (default: config key_file)")
    p.add_argument("--key-id", type=int, default=0)
    p.add_argument("--force", action="store_true",
                   help="overwrite an existing key file")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("plan", help="preview the probe stream")
    p.add_argument("--limit", type=int, default=20,
                   help="specs to write (default 20)")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("send", help="run a probing campaign")
    p.add_argument("--simnet", action="store_true",
                   help="send into the simulated network from the config topology")
    p.add_argument("--interface", help="egress interface (live send)")
    p.add_argument("--gateway-mac", help="next-hop link-layer address (live send)")
    p.add_argument("--source-mac", help="our link-layer address (live send)")
    p.set_defaults(func=cmd_send)

    p = sub.add_parser("listen",
                       help="classify captured frames and DNS query logs")
    p.add_argument("--frames", help=f"frame file (default run dir {FRAME_LOG})")
    p.add_argument("--dns-log", help=f"DNS query log (default run dir {DNS_LOG})")
    p.set_defaults(func=cmd_listen)

    p = sub.add_parser("ingest-pdns", help="scan passive-DNS feed exports")
    p.add_argument("feeds", nargs="*",
                   help=f"feed files (default: run dir {PDNS_FEED})")
    p.set_defaults(func=cmd_ingest_pdns)

    p = sub.add_parser("correlate",
                       help="join reactions to transmissions and summarize")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("simulate",
                       help="run the whole pipeline against the simulated network")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="render tables, figures, and timelines")
    p.add_argument("--target", help="emit a timeline for this target only")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ConfigError, KeyFileError, AsnTableError, InvalidTopology,
            EmptyTargetListError) as exc:
        print(f"noncewatch: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"noncewatch: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
