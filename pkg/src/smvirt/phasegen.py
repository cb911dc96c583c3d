"""Compiler stand-in: phase identification and synthetic workloads.

Segmentation walks a per-instruction resource trace left to right and
opens a new phase at every barrier, or wherever an instruction's live
demand moves more than a relative threshold away from the current
segment's established maximum (once the segment has a minimum length).
Neighbouring non-barrier segments whose maxima ended up within the
threshold of each other are then merged, so emitted adjacent phases are
always sufficiently different; that makes segmentation a fixed point of
its own flat reconstruction.

Workload generation uses an explicit xorshift64* generator (seeded
through splitmix64) rather than any platform RNG, so a (template, seed)
pair produces the identical kernel everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .engine import mem_instruction_indices
from .workload import (KernelProgram, PhaseDescriptor, WorkloadSpec,
                       declared_spec)

_MASK64 = (1 << 64) - 1


class XorShift64Star:
    """xorshift64* PRNG: shifts 12/25/27, multiplier 2685821657736338717.

    State is seeded through one round of splitmix64 (increment
    0x9E3779B97F4A7C15) so nearby seeds decorrelate and seed 0 is legal.
    """

    def __init__(self, seed: int):
        z = (seed + 0x9E3779B97F4A7C15) & _MASK64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        self.state = (z ^ (z >> 31)) or 0x9E3779B97F4A7C15

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & _MASK64
        x ^= x >> 27
        self.state = x
        return (x * 2685821657736338717) & _MASK64

    def randrange(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi)."""
        if hi <= lo:
            raise ValueError("empty range")
        return lo + self.next_u64() % (hi - lo)

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (self.next_u64() / 2.0**64) * (hi - lo)

    def chance(self, p: float) -> bool:
        return self.next_u64() / 2.0**64 < p

    def choice(self, seq: Sequence):
        return seq[self.next_u64() % len(seq)]


@dataclass(frozen=True)
class InstructionRecord:
    live_regs: int
    live_smem: int
    is_mem: bool = False
    is_barrier: bool = False

    def __post_init__(self):
        if self.live_regs < 0 or self.live_smem < 0:
            raise ValueError("live counts must be >= 0")


@dataclass(frozen=True)
class InstructionTrace:
    records: tuple[InstructionRecord, ...]

    def __post_init__(self):
        if not self.records:
            raise ValueError("trace must be non-empty")
        object.__setattr__(self, "records", tuple(self.records))

    def __len__(self):
        return len(self.records)


@dataclass(frozen=True)
class PhaseParams:
    delta: float = 0.25
    min_len: int = 8

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.min_len < 1:
            raise ValueError("min_len must be >= 1")


def _differs(value: int, established: int, delta: float) -> bool:
    return abs(value - established) / max(established, 1) > delta


@dataclass
class _Segment:
    length: int
    regs: int
    smem: int
    mem: int
    barrier: bool

    def to_phase(self) -> PhaseDescriptor:
        return PhaseDescriptor(
            insts=self.length, regs=self.regs, smem=self.smem,
            mem_ratio=self.mem / self.length, ends_with_barrier=self.barrier)


def identify_phases(trace: InstructionTrace,
                    params: PhaseParams = PhaseParams()
                    ) -> list[PhaseDescriptor]:
    """Segment a resource trace into phases (see module docstring)."""
    segments: list[_Segment] = []
    seg = None
    for rec in trace.records:
        if seg is not None and seg.length >= params.min_len and (
                _differs(rec.live_regs, seg.regs, params.delta)
                or _differs(rec.live_smem, seg.smem, params.delta)):
            segments.append(seg)
            seg = None
        if seg is None:
            seg = _Segment(0, 0, 0, 0, False)
        seg.length += 1
        seg.regs = max(seg.regs, rec.live_regs)
        seg.smem = max(seg.smem, rec.live_smem)
        seg.mem += bool(rec.is_mem)
        if rec.is_barrier:
            seg.barrier = True
            segments.append(seg)
            seg = None
    if seg is not None:
        segments.append(seg)

    # merge neighbours that ended up insufficiently different, so that
    # adjacent emitted phases always differ by more than delta (barrier
    # boundaries always stand)
    merged = True
    while merged:
        merged = False
        out: list[_Segment] = []
        for seg in segments:
            prev = out[-1] if out else None
            if (prev is not None and not prev.barrier
                    and not _differs(seg.regs, prev.regs, params.delta)
                    and not _differs(seg.smem, prev.smem, params.delta)):
                prev.length += seg.length
                prev.regs = max(prev.regs, seg.regs)
                prev.smem = max(prev.smem, seg.smem)
                prev.mem += seg.mem
                prev.barrier = seg.barrier
                merged = True
            else:
                out.append(seg)
        segments = out
    return [seg.to_phase() for seg in segments]


def reconstruct_trace(phases: Iterable[PhaseDescriptor]) -> InstructionTrace:
    """Flat per-instruction trace realizing the given phases."""
    records = []
    for phase in phases:
        mem_at = set(mem_instruction_indices(phase.insts, phase.mem_ratio))
        for i in range(phase.insts):
            records.append(InstructionRecord(
                live_regs=phase.regs, live_smem=phase.smem,
                is_mem=i in mem_at,
                is_barrier=(phase.ends_with_barrier
                            and i == phase.insts - 1)))
    return InstructionTrace(tuple(records))


ARCHETYPES = ("compute-heavy", "scratchpad-burst", "barrier-heavy", "mixed")


@dataclass(frozen=True)
class GeneratorTemplate:
    archetype: str
    seed: int
    total_threads: int = 2048
    threads_per_block: int = 256

    def __post_init__(self):
        if self.archetype not in ARCHETYPES:
            raise ValueError(f"unknown archetype {self.archetype!r}")


def _gen_compute_heavy(rng: XorShift64Star) -> list[PhaseDescriptor]:
    phases = []
    for _ in range(rng.randrange(3, 6)):
        phases.append(PhaseDescriptor(
            insts=rng.randrange(24, 48),
            regs=rng.randrange(20, 33),
            smem=0,
            mem_ratio=rng.choice([0.0, 0.05, 0.1]),
            ends_with_barrier=False))
    return phases


def _gen_scratchpad_burst(rng: XorShift64Star) -> list[PhaseDescriptor]:
    # low-demand entry, one or two big scratchpad bursts whose working set
    # synchronizes (every burst ends with a barrier), small reduction tail
    small_smem = rng.randrange(512, 1025)
    burst_smem = rng.randrange(4096, 6017)
    high_regs = rng.randrange(48, 57)
    phases = [PhaseDescriptor(
        insts=rng.randrange(16, 33), regs=rng.randrange(12, 21), smem=0,
        mem_ratio=rng.choice([0.125, 0.1875]), ends_with_barrier=True)]
    for _ in range(rng.randrange(1, 3)):
        phases.append(PhaseDescriptor(
            insts=rng.randrange(24, 49), regs=high_regs,
            smem=burst_smem, mem_ratio=rng.choice([0.125, 0.1875]),
            ends_with_barrier=True))
    phases.append(PhaseDescriptor(
        insts=rng.randrange(12, 25), regs=rng.randrange(12, 21),
        smem=small_smem, mem_ratio=0.125, ends_with_barrier=True))
    return phases


def _gen_barrier_heavy(rng: XorShift64Star) -> list[PhaseDescriptor]:
    phases = []
    for _ in range(rng.randrange(5, 9)):
        phases.append(PhaseDescriptor(
            insts=rng.randrange(12, 33),
            regs=rng.randrange(16, 33),
            smem=rng.choice([1024, 2048]),
            mem_ratio=rng.choice([0.125, 0.1875, 0.25]),
            ends_with_barrier=rng.chance(0.75)))
    # the archetype promises a barrier majority
    for i, p in enumerate(phases):
        if sum(q.ends_with_barrier for q in phases) * 2 >= len(phases):
            break
        if not p.ends_with_barrier:
            phases[i] = PhaseDescriptor(p.insts, p.regs, p.smem, p.mem_ratio,
                                        ends_with_barrier=True)
    return phases


def _gen_mixed(rng: XorShift64Star) -> list[PhaseDescriptor]:
    # one early register spike dominates the declaration; the rest of the
    # kernel runs far below it
    spike_at = rng.randrange(0, 2)
    phases = []
    for i in range(rng.randrange(4, 7)):
        if i == spike_at:
            phases.append(PhaseDescriptor(
                insts=rng.randrange(12, 25), regs=rng.randrange(56, 65),
                smem=rng.choice([0, 512]), mem_ratio=0.25,
                ends_with_barrier=False))
        else:
            phases.append(PhaseDescriptor(
                insts=rng.randrange(16, 41), regs=rng.randrange(8, 17),
                smem=rng.choice([0, 512, 1024]),
                mem_ratio=rng.choice([0.1875, 0.25]),
                ends_with_barrier=rng.chance(0.2)))
    return phases


_GENERATORS = {
    "compute-heavy": _gen_compute_heavy,
    "scratchpad-burst": _gen_scratchpad_burst,
    "barrier-heavy": _gen_barrier_heavy,
    "mixed": _gen_mixed,
}


def generate_workload(template: GeneratorTemplate) -> WorkloadSpec:
    """Deterministic synthetic kernel for the template's archetype."""
    rng = XorShift64Star(template.seed)
    phases = _GENERATORS[template.archetype](rng)
    kernel = KernelProgram(
        name=f"{template.archetype}-{template.seed:04x}",
        phases=tuple(phases),
        total_threads=template.total_threads)
    return WorkloadSpec(
        kernel, declared_spec(kernel, template.threads_per_block))
