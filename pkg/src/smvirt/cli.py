"""Command-line interface: run sweeps, generate workloads, identify phases."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .phasegen import (GeneratorTemplate, InstructionRecord, InstructionTrace,
                       PhaseParams, generate_workload, identify_phases)
from .sweep import SweepError, load_config, run_sweep
from .workload import WorkloadError, serialize_workload


def _cmd_run(args) -> int:
    try:
        config = load_config(args.config)
        written = run_sweep(config)
    except (SweepError, WorkloadError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for name in ("csv", "summary"):
        print(f"{name}: {written[name]}")
    figures = [v for k, v in sorted(written.items())
               if k not in ("csv", "summary")]
    if figures:
        print(f"figures: {len(figures)} file(s) in "
              f"{Path(written['csv']).parent}")
    return 0


def _cmd_generate(args) -> int:
    try:
        template = GeneratorTemplate(
            archetype=args.template, seed=args.seed,
            total_threads=args.total_threads,
            threads_per_block=args.threads_per_block)
        workload = generate_workload(template)
    except (ValueError, WorkloadError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    text = serialize_workload(workload)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out} ({workload.kernel.name}, "
              f"{len(workload.kernel.phases)} phases)")
    return 0


def parse_trace_file(text: str) -> InstructionTrace:
    """One instruction per line: `<live_regs> <live_smem> [mem] [barrier]`,
    with `#` comments."""
    records = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) < 2:
            raise WorkloadError(
                f"line {lineno}: expected `regs smem [mem] [barrier]`")
        try:
            regs, smem = int(fields[0]), int(fields[1])
        except ValueError:
            raise WorkloadError(
                f"line {lineno}: malformed numeric field") from None
        flags = set(fields[2:])
        unknown = flags - {"mem", "barrier"}
        if unknown:
            raise WorkloadError(
                f"line {lineno}: unknown flags {sorted(unknown)}")
        records.append(InstructionRecord(
            live_regs=regs, live_smem=smem,
            is_mem="mem" in flags, is_barrier="barrier" in flags))
    if not records:
        raise WorkloadError("trace file contains no instructions")
    return InstructionTrace(tuple(records))


def _cmd_phases(args) -> int:
    try:
        text = Path(args.trace).read_text(encoding="utf-8")
        trace = parse_trace_file(text)
        params = PhaseParams(delta=args.delta, min_len=args.min_len)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for p in identify_phases(trace, params):
        print(f"phase insts={p.insts} regs={p.regs} smem={p.smem} "
              f"mem_ratio={p.mem_ratio!r} barrier={int(p.ends_with_barrier)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smvirt",
        description="SM resource-management simulator and sweep harness")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a configured sweep")
    run.add_argument("--config", required=True, help="sweep config (INI)")
    run.set_defaults(func=_cmd_run)

    gen = sub.add_parser("generate", help="emit a synthetic workload file")
    gen.add_argument("--template", required=True,
                     help="archetype (compute-heavy, scratchpad-burst, "
                          "barrier-heavy, mixed)")
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--out", required=True, help="output path or - for stdout")
    gen.add_argument("--total-threads", type=int, default=2048)
    gen.add_argument("--threads-per-block", type=int, default=256)
    gen.set_defaults(func=_cmd_generate)

    phases = sub.add_parser("phases",
                            help="segment an instruction trace into phases")
    phases.add_argument("--trace", required=True)
    phases.add_argument("--delta", type=float, default=0.25)
    phases.add_argument("--min-len", type=int, default=8)
    phases.set_defaults(func=_cmd_phases)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
