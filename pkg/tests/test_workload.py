import pytest

from smvirt.workload import (
    GpuConfig,
    KernelProgram,
    PhaseDescriptor,
    WorkloadError,
    arch_preset,
    declared_spec,
    parse_workload,
    preset_names,
    serialize_workload,
)

NQU_LIKE = """\
# two scratchpad phases, large then small
kernel nqu_like
total_threads 1024
phase insts=40 regs=24 smem=4224 mem_ratio=0.5 barrier=1
phase insts=20 regs=16 smem=384 mem_ratio=0.25 barrier=0
"""


def test_parse_phases_carry_scratchpad_demands():
    w = parse_workload(NQU_LIKE)
    assert [p.smem for p in w.kernel.phases] == [4224, 384]
    assert w.kernel.name == "nqu_like"
    assert w.kernel.phases[0].ends_with_barrier
    assert not w.kernel.phases[1].ends_with_barrier


def test_parse_empty_phase_list_rejected():
    with pytest.raises(WorkloadError, match="at least one phase"):
        parse_workload("kernel k\ntotal_threads 64\n")


def test_parse_block_size_must_be_warp_multiple():
    with pytest.raises(WorkloadError, match="multiple of warp size"):
        parse_workload(NQU_LIKE, threads_per_block=100)


def test_parse_reports_line_numbers():
    bad = "kernel k\ntotal_threads 64\nphase insts=oops regs=1 smem=0 mem_ratio=0 barrier=0\n"
    with pytest.raises(WorkloadError, match="line 3"):
        parse_workload(bad)


def test_parse_missing_required_key():
    with pytest.raises(WorkloadError, match="total_threads"):
        parse_workload("kernel k\nphase insts=1 regs=0 smem=0 mem_ratio=0 barrier=0\n")


def test_parse_unknown_declaration():
    with pytest.raises(WorkloadError, match="line 1"):
        parse_workload("blocks 4\n")


def test_roundtrip_identity():
    w = parse_workload(NQU_LIKE, threads_per_block=128)
    again = parse_workload(serialize_workload(w))
    assert again == w


def _kernel(regs, smem):
    phases = tuple(
        PhaseDescriptor(insts=10, regs=r, smem=s, mem_ratio=0.0)
        for r, s in zip(regs, smem))
    return KernelProgram(name="k", phases=phases, total_threads=256)


def test_declared_spec_is_per_field_max():
    spec = declared_spec(_kernel([24, 40, 16], [0, 4224, 384]), 256)
    assert (spec.regs_per_thread, spec.smem_per_block) == (40, 4224)


def test_declared_spec_single_phase():
    spec = declared_spec(_kernel([32], [0]), 64)
    assert (spec.regs_per_thread, spec.smem_per_block) == (32, 0)


def test_declared_spec_all_zero():
    spec = declared_spec(_kernel([0, 0], [0, 0]), 64)
    assert (spec.regs_per_thread, spec.smem_per_block) == (0, 0)


def test_declared_spec_monotone_under_added_phase():
    base = _kernel([24, 40], [512, 4224])
    grown = KernelProgram(
        name="k", phases=base.phases + (PhaseDescriptor(5, 8, 64, 0.0),),
        total_threads=256)
    a, b = declared_spec(base, 64), declared_spec(grown, 64)
    assert b.regs_per_thread >= a.regs_per_thread
    assert b.smem_per_block >= a.smem_per_block


def test_presets_satisfy_config_invariants():
    for name in preset_names():
        cfg = arch_preset(name)  # constructor validates
        assert cfg.thread_slots % cfg.warp_size == 0


def test_presets_differ_and_gen_a_has_smaller_register_file():
    a, b, c = arch_preset("gen-a"), arch_preset("gen-b"), arch_preset("gen-c")
    assert a.registers_total < b.registers_total
    diffs_ab = sum(1 for f in ("registers_total", "scratchpad_bytes",
                               "thread_slots", "max_resident_blocks")
                   if getattr(a, f) != getattr(b, f))
    diffs_bc = sum(1 for f in ("registers_total", "scratchpad_bytes",
                               "thread_slots", "max_resident_blocks")
                   if getattr(b, f) != getattr(c, f))
    assert diffs_ab >= 2 and diffs_bc >= 2


def test_preset_lookup_is_deterministic():
    assert arch_preset("gen-b") == arch_preset("gen-b")


def test_unknown_preset():
    with pytest.raises(WorkloadError, match="unknown preset"):
        arch_preset("gen-x")


def test_gpu_config_rejects_bad_values():
    with pytest.raises(WorkloadError):
        GpuConfig(registers_total=0, scratchpad_bytes=1, thread_slots=32,
                  max_resident_blocks=1)
    with pytest.raises(WorkloadError):
        GpuConfig(registers_total=1, scratchpad_bytes=1, thread_slots=33,
                  max_resident_blocks=1)


def test_num_blocks_is_ceiling_division():
    w = parse_workload(NQU_LIKE, threads_per_block=768)
    assert w.num_blocks == 2  # 1024 threads / 768 per block
