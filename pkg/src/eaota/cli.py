"""Command-line entry point: ``eaota <command> ...``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bench
from .codec import MAX_FRAME, decode, describe, encode, read_capture, write_capture
from .delta import DEFAULT_MERGE_GAP, compute_deltas
from .energy import CostModel, PowerTrace, TraceParams, generate_trace
from .flash import DEFAULT_SEGMENT_SIZE
from .intermittent import NonTerminating, SimConfig, simulate_detailed
from .protocol import Approach, UpdateConfig, UpdateImpossible, plan_packets


def _read(path) -> bytes:
    return Path(path).read_bytes()


def cmd_diff(args) -> int:
    deltas = compute_deltas(_read(args.old), _read(args.new), args.segment_size, args.merge_gap)
    total = 0
    for d in deltas:
        spans = " ".join(f"{b.offset}+{b.length}" for b in d.blocks)
        grow = " (new)" if d.grows_image else ""
        print(f"segment {d.segment_index:4d}{grow}: {len(d.blocks)} blocks, {d.n_bytes} bytes  {spans}")
        total += d.n_bytes
    print(f"{len(deltas)} dirty segments, {total} changed bytes in blocks")
    return 0


def cmd_encode(args) -> int:
    cfg = UpdateConfig(segment_size=args.segment_size, max_packet=args.max_packet,
                       merge_gap=args.merge_gap)
    packets = plan_packets(args.approach, _read(args.old), _read(args.new), cfg)
    frames = [encode(p) for p in packets]
    Path(args.output).write_bytes(write_capture(frames))
    print(f"{len(frames)} {args.approach} frames, {sum(map(len, frames))} bytes -> {args.output}")
    return 0


def cmd_pktdump(args) -> int:
    status = 0
    for i, frame in enumerate(read_capture(_read(args.capture))):
        try:
            print(f"#{i:<4} {describe(decode(frame))}")
        except ValueError as exc:
            print(f"#{i:<4} ERROR {type(exc).__name__}: {exc}")
            status = 1
    return status


def cmd_trace_gen(args) -> int:
    params = TraceParams(args.base_uw, args.burst_uw, args.burst_prob, args.slot_s,
                         args.duration_s)
    trace = generate_trace(args.seed, params)
    trace.save_csv(args.output)
    print(f"{len(trace.times)} samples, mean {trace.mean_power:.1f} uW -> {args.output}")
    return 0


def cmd_simulate(args) -> int:
    cfg = UpdateConfig(segment_size=args.segment_size, hypothetical_sram=args.hypothetical_sram,
                       lw_light_write=not args.plain_lw)
    sim = SimConfig(capacitance=args.capacitance, v_init=args.v_init,
                    failure_prob=args.failure_prob, seed=args.seed,
                    record=args.transcript is not None)
    if args.cost:
        cost = CostModel.from_dict(json.loads(Path(args.cost).read_text()))
    else:
        cost = CostModel()
    trace = PowerTrace.load_csv(args.trace)
    try:
        res = simulate_detailed(args.approach, _read(args.old), _read(args.new), trace,
                                sim, cfg, cost)
    except UpdateImpossible as exc:
        print(f"update impossible: {exc}", file=sys.stderr)
        return 2
    except NonTerminating as exc:
        print(f"non-terminating: {exc}", file=sys.stderr)
        return 3
    out = res.metrics.to_dict()
    out["conservation_error"] = res.conservation_error
    text = json.dumps(out, indent=2, sort_keys=True)
    if args.json:
        Path(args.json).write_text(text + "\n")
    print(text)
    if args.transcript:
        Path(args.transcript).write_text(res.transcript.to_jsonl())
    return 0 if res.conservation_error <= 1e-6 else 1


def cmd_bench(args) -> int:
    cfg = bench.SuiteConfig.load(args.config) if args.config else bench.SuiteConfig()
    if args.n_traces is not None:
        cfg.n_traces = args.n_traces
    if args.workers is not None:
        cfg.workers = args.workers
    report = bench.run_suite(cfg)
    for p in bench.write_report(report, args.out_dir):
        print(f"wrote {p}")
    print(bench.format_table(report))
    failed = [c for c in report["checks"] if not c["passed"]]
    for c in failed:
        print(f"CHECK FAILED: {c['name']} {c['detail']}", file=sys.stderr)
    return 0 if not failed else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="eaota", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def sizes(p):
        p.add_argument("--segment-size", type=int, default=DEFAULT_SEGMENT_SIZE)
        p.add_argument("--merge-gap", type=int, default=DEFAULT_MERGE_GAP)

    p = sub.add_parser("diff", help="per-segment deltas between two images")
    p.add_argument("old")
    p.add_argument("new")
    sizes(p)
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("encode", help="write the update frames to a capture file")
    p.add_argument("old")
    p.add_argument("new")
    p.add_argument("-a", "--approach", choices=[a.value for a in Approach], default="EA")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--max-packet", type=int, default=MAX_FRAME)
    sizes(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("pktdump", help="print the frames of a capture file")
    p.add_argument("capture")
    p.set_defaults(func=cmd_pktdump)

    p = sub.add_parser("trace-gen", help="generate a harvested-power trace CSV")
    d = TraceParams()
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--base-uw", type=float, default=d.base_uw)
    p.add_argument("--burst-uw", type=float, default=d.burst_uw)
    p.add_argument("--burst-prob", type=float, default=d.burst_prob)
    p.add_argument("--slot-s", type=float, default=d.slot_s)
    p.add_argument("--duration-s", type=float, default=d.duration_s)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_trace_gen)

    p = sub.add_parser("simulate", help="run one update on a power trace")
    p.add_argument("old")
    p.add_argument("new")
    p.add_argument("--trace", required=True)
    p.add_argument("-a", "--approach", choices=[a.value for a in Approach], default="EA")
    p.add_argument("--segment-size", type=int, default=DEFAULT_SEGMENT_SIZE)
    p.add_argument("--capacitance", type=float, default=0.4)
    p.add_argument("--v-init", type=float, default=None)
    p.add_argument("--failure-prob", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hypothetical-sram", action="store_true")
    p.add_argument("--plain-lw", action="store_true",
                   help="charge LW commits as erase+write instead of light write")
    p.add_argument("--cost", help="JSON file overriding cost model constants")
    p.add_argument("--json", help="also write the metrics JSON here")
    p.add_argument("--transcript", help="write a JSON-lines event transcript here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="run the benchmark suite")
    p.add_argument("--config", help="suite config JSON (defaults if omitted)")
    p.add_argument("--out-dir", default="bench-out")
    p.add_argument("--n-traces", type=int)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
