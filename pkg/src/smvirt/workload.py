"""Domain types for GPU configurations and phase-annotated kernels.

A kernel is an ordered list of phases, each declaring the per-thread
register count, per-block scratchpad bytes, instruction count and memory
intensity of that stretch of execution.  The static resource declaration
of the whole kernel is the worst case over its phases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace


class WorkloadError(ValueError):
    """Raised for malformed workload files or invariant violations."""


RESOURCE_KINDS = ("thread_slots", "registers", "scratchpad")


@dataclass(frozen=True)
class GpuConfig:
    """Physical capacities and timing parameters of one SM."""

    registers_total: int
    scratchpad_bytes: int
    thread_slots: int
    max_resident_blocks: int
    warp_size: int = 32
    issue_width: int = 2
    mem_latency: int = 100
    swap_latency: int = 400
    reg_chunk: int = 64
    smem_chunk: int = 128

    def __post_init__(self):
        for name in ("registers_total", "scratchpad_bytes", "thread_slots",
                     "max_resident_blocks", "warp_size", "mem_latency",
                     "swap_latency", "reg_chunk", "smem_chunk"):
            if getattr(self, name) <= 0:
                raise WorkloadError(f"{name} must be positive")
        if self.issue_width < 1:
            raise WorkloadError("issue_width must be at least 1")
        if self.thread_slots % self.warp_size != 0:
            raise WorkloadError("thread_slots must be a multiple of warp_size")

    def capacity(self, kind: str) -> int:
        return {
            "thread_slots": self.thread_slots,
            "registers": self.registers_total,
            "scratchpad": self.scratchpad_bytes,
        }[kind]

    def chunk(self, kind: str) -> int:
        # Thread-slot entries move as a fixed-cost context record: a whole
        # warp's contexts transfer in 4 chunks regardless of slot count.
        return {
            "thread_slots": max(1, self.warp_size // 4),
            "registers": self.reg_chunk,
            "scratchpad": self.smem_chunk,
        }[kind]


@dataclass(frozen=True)
class ResourceSpec:
    """Static declaration a program hands to the hardware: threads per
    block, registers per thread, scratchpad bytes per block."""

    threads_per_block: int
    regs_per_thread: int
    smem_per_block: int

    def validate(self, warp_size: int) -> None:
        if self.threads_per_block <= 0:
            raise WorkloadError("threads_per_block must be positive")
        if self.threads_per_block % warp_size != 0:
            raise WorkloadError(
                "threads_per_block must be a multiple of warp size")
        if self.regs_per_thread < 0 or self.smem_per_block < 0:
            raise WorkloadError("per-thread/per-block demands must be >= 0")


@dataclass(frozen=True)
class PhaseDescriptor:
    """Resource requirements of one contiguous stretch of a kernel."""

    insts: int
    regs: int
    smem: int
    mem_ratio: float
    ends_with_barrier: bool = False

    def __post_init__(self):
        if self.insts < 1:
            raise WorkloadError("phase insts must be >= 1")
        if not 0.0 <= self.mem_ratio <= 1.0:
            raise WorkloadError("mem_ratio must lie in [0, 1]")
        if self.regs < 0 or self.smem < 0:
            raise WorkloadError("phase regs/smem must be >= 0")

    @property
    def mem_insts(self) -> int:
        """Number of memory instructions in the phase (half-up rounding)."""
        return int(math.floor(self.insts * self.mem_ratio + 0.5))


@dataclass(frozen=True)
class KernelProgram:
    name: str
    phases: tuple[PhaseDescriptor, ...]
    total_threads: int

    def __post_init__(self):
        if not self.phases:
            raise WorkloadError("kernel must contain at least one phase")
        if self.total_threads <= 0:
            raise WorkloadError("total_threads must be positive")
        object.__setattr__(self, "phases", tuple(self.phases))


@dataclass(frozen=True)
class WorkloadSpec:
    """A kernel paired with the resource specification it runs under."""

    kernel: KernelProgram
    spec: ResourceSpec

    @property
    def num_blocks(self) -> int:
        return math.ceil(self.kernel.total_threads / self.spec.threads_per_block)

    def with_block_size(self, threads_per_block: int) -> "WorkloadSpec":
        """Same kernel re-declared at a different block size."""
        new_spec = replace(self.spec, threads_per_block=threads_per_block)
        return WorkloadSpec(kernel=self.kernel, spec=new_spec)


def declared_spec(kernel: KernelProgram, threads_per_block: int) -> ResourceSpec:
    """Worst-case static declaration: max register and scratchpad demand
    over all phases, as a compiler must declare for the whole kernel."""
    return ResourceSpec(
        threads_per_block=threads_per_block,
        regs_per_thread=max(p.regs for p in kernel.phases),
        smem_per_block=max(p.smem for p in kernel.phases),
    )


# Preset capacities are authored values: three generations that differ in
# register file, scratchpad and scheduler capacity so that the best block
# size of a resource-bound kernel moves from one generation to the next.
_PRESETS = {
    "gen-a": GpuConfig(registers_total=32768, scratchpad_bytes=49152,
                       thread_slots=1536, max_resident_blocks=8),
    "gen-b": GpuConfig(registers_total=65536, scratchpad_bytes=49152,
                       thread_slots=2048, max_resident_blocks=16),
    "gen-c": GpuConfig(registers_total=65536, scratchpad_bytes=65536,
                       thread_slots=2048, max_resident_blocks=32),
}


def arch_preset(name: str) -> GpuConfig:
    try:
        return _PRESETS[name]
    except KeyError:
        raise WorkloadError(f"unknown preset: {name!r}") from None


def preset_names() -> tuple[str, ...]:
    return tuple(_PRESETS)


def _parse_phase_line(fields: str, lineno: int) -> PhaseDescriptor:
    kv = {}
    for tok in fields.split():
        if "=" not in tok:
            raise WorkloadError(f"line {lineno}: expected key=value, got {tok!r}")
        key, _, val = tok.partition("=")
        kv[key] = val
    required = ("insts", "regs", "smem", "mem_ratio", "barrier")
    for key in required:
        if key not in kv:
            raise WorkloadError(f"line {lineno}: phase missing {key}=")
    unknown = set(kv) - set(required)
    if unknown:
        raise WorkloadError(f"line {lineno}: unknown phase keys {sorted(unknown)}")
    try:
        return PhaseDescriptor(
            insts=int(kv["insts"]),
            regs=int(kv["regs"]),
            smem=int(kv["smem"]),
            mem_ratio=float(kv["mem_ratio"]),
            ends_with_barrier=bool(int(kv["barrier"])),
        )
    except WorkloadError as exc:
        raise WorkloadError(f"line {lineno}: {exc}") from None
    except ValueError:
        raise WorkloadError(f"line {lineno}: malformed numeric field") from None


def parse_workload(content: str, threads_per_block: int = 256,
                   warp_size: int = 32) -> WorkloadSpec:
    """Parse the line-oriented workload format.

    Recognised lines (``#`` starts a comment, blank lines ignored)::

        kernel <name>
        total_threads <n>
        threads_per_block <n>          (optional, default 256)
        phase insts=<n> regs=<n> smem=<bytes> mem_ratio=<f> barrier=<0|1>

    Phases apply in file order.  The returned spec carries the declared
    worst-case register/scratchpad demand over all phases.
    """
    name = None
    total_threads = None
    phases: list[PhaseDescriptor] = []
    tpb = threads_per_block
    for lineno, raw in enumerate(content.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        keyword, _, rest = line.partition(" ")
        rest = rest.strip()
        if keyword == "kernel":
            if not rest:
                raise WorkloadError(f"line {lineno}: kernel needs a name")
            name = rest
        elif keyword == "total_threads":
            try:
                total_threads = int(rest)
            except ValueError:
                raise WorkloadError(f"line {lineno}: total_threads must be an "
                                    f"integer, got {rest!r}") from None
        elif keyword == "threads_per_block":
            try:
                tpb = int(rest)
            except ValueError:
                raise WorkloadError(f"line {lineno}: threads_per_block must be "
                                    f"an integer, got {rest!r}") from None
        elif keyword == "phase":
            phases.append(_parse_phase_line(rest, lineno))
        else:
            raise WorkloadError(f"line {lineno}: unknown declaration {keyword!r}")
    if name is None:
        raise WorkloadError("missing required key: kernel")
    if total_threads is None:
        raise WorkloadError("missing required key: total_threads")
    kernel = KernelProgram(name=name, phases=tuple(phases),
                           total_threads=total_threads)
    spec = declared_spec(kernel, tpb)
    spec.validate(warp_size)
    return WorkloadSpec(kernel=kernel, spec=spec)


def serialize_workload(workload: WorkloadSpec) -> str:
    """Inverse of parse_workload for declared-spec workloads."""
    lines = [
        f"kernel {workload.kernel.name}",
        f"total_threads {workload.kernel.total_threads}",
        f"threads_per_block {workload.spec.threads_per_block}",
    ]
    for p in workload.kernel.phases:
        lines.append(
            f"phase insts={p.insts} regs={p.regs} smem={p.smem} "
            f"mem_ratio={p.mem_ratio!r} barrier={int(p.ends_with_barrier)}")
    return "\n".join(lines) + "\n"
