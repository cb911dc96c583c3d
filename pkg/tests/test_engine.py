import random

import pytest

from smvirt.coordinator import CoordinatorParams
from smvirt.engine import (
    BASELINE,
    VIRT,
    WLM,
    Policy,
    SimResult,
    UnschedulableError,
    mem_instruction_indices,
    simulate,
    warp_phase_cycles,
)
from smvirt.workload import (
    GpuConfig,
    KernelProgram,
    PhaseDescriptor,
    ResourceSpec,
    WorkloadSpec,
)


def make_workload(phases, total_threads=32, tpb=32):
    kernel = KernelProgram("k", tuple(phases), total_threads)
    regs = max(p.regs for p in phases)
    smem = max(p.smem for p in phases)
    return WorkloadSpec(kernel, ResourceSpec(tpb, regs, smem))


def small_cfg(**over):
    fields = dict(registers_total=65536, scratchpad_bytes=49152,
                  thread_slots=2048, max_resident_blocks=16,
                  issue_width=1, mem_latency=100)
    fields.update(over)
    return GpuConfig(**fields)


ALL_POLICIES = [Policy(BASELINE), Policy(WLM), Policy(VIRT)]


def test_mem_instruction_placement():
    assert mem_instruction_indices(10, 0.0) == ()
    assert mem_instruction_indices(2, 1.0) == (0, 1)
    assert mem_instruction_indices(8, 0.5) == (1, 3, 5, 7)
    assert mem_instruction_indices(4, 0.5) == (1, 3)


def test_warp_phase_cycles_examples():
    cfg = small_cfg()
    assert warp_phase_cycles(PhaseDescriptor(10, 0, 0, 0.0), cfg) == 10
    assert warp_phase_cycles(PhaseDescriptor(2, 0, 0, 1.0), cfg) == 202
    assert warp_phase_cycles(PhaseDescriptor(8, 0, 0, 0.5), cfg) == 408


@pytest.mark.parametrize("policy", ALL_POLICIES, ids=lambda p: p.kind)
def test_single_warp_compute_only(policy):
    w = make_workload([PhaseDescriptor(10, 8, 0, 0.0)])
    assert simulate(w, small_cfg(), policy).total_cycles == 10


@pytest.mark.parametrize("policy", ALL_POLICIES, ids=lambda p: p.kind)
def test_single_warp_memory_bound(policy):
    w = make_workload([PhaseDescriptor(2, 8, 0, 1.0)])
    assert simulate(w, small_cfg(), policy).total_cycles == 202


@pytest.mark.parametrize("policy", ALL_POLICIES, ids=lambda p: p.kind)
def test_two_warps_hide_latency(policy):
    w = make_workload([PhaseDescriptor(2, 8, 0, 1.0)], total_threads=64,
                      tpb=64)
    assert simulate(w, small_cfg(), policy).total_cycles == 203


@pytest.mark.parametrize("policy", ALL_POLICIES, ids=lambda p: p.kind)
def test_barrier_rendezvous_hand_trace(policy):
    # two warps, first phase memory-tailed: without the barrier the first
    # warp starts the next phase a cycle earlier
    cfg = small_cfg()
    with_barrier = make_workload(
        [PhaseDescriptor(2, 8, 0, 0.5, ends_with_barrier=True),
         PhaseDescriptor(2, 8, 0, 0.0)], total_threads=64, tpb=64)
    without = make_workload(
        [PhaseDescriptor(2, 8, 0, 0.5), PhaseDescriptor(2, 8, 0, 0.0)],
        total_threads=64, tpb=64)
    assert simulate(with_barrier, cfg, policy).total_cycles == 108
    assert simulate(without, cfg, policy).total_cycles == 107


def _random_phases(rng, max_phases=4):
    return [
        PhaseDescriptor(
            insts=rng.randrange(1, 40),
            regs=rng.randrange(0, 48),
            smem=rng.randrange(0, 2048),
            mem_ratio=rng.choice([0.0, 0.1, 0.25, 0.5, 1.0]),
            ends_with_barrier=rng.random() < 0.3,
        )
        for _ in range(rng.randrange(1, max_phases + 1))
    ]


def test_single_warp_matches_analytic_model():
    rng = random.Random(42)
    cfg = small_cfg()
    for _ in range(300):
        phases = _random_phases(rng)
        w = make_workload(phases)
        expect = sum(warp_phase_cycles(p, cfg) for p in phases)
        for policy in ALL_POLICIES:
            assert simulate(w, cfg, policy).total_cycles == expect


def test_work_conservation():
    rng = random.Random(7)
    for _ in range(30):
        phases = _random_phases(rng)
        blocks = rng.randrange(1, 6)
        wpb = rng.randrange(1, 4)
        w = make_workload(phases, total_threads=blocks * wpb * 32,
                          tpb=wpb * 32)
        expect = blocks * wpb * sum(p.insts for p in phases)
        for policy in ALL_POLICIES:
            res = simulate(w, small_cfg(issue_width=2), policy)
            assert res.instructions_issued == expect


def test_determinism():
    rng = random.Random(3)
    phases = _random_phases(rng)
    w = make_workload(phases, total_threads=512, tpb=128)
    cfg = small_cfg(issue_width=2)
    for policy in ALL_POLICIES:
        a = simulate(w, cfg, policy)
        b = simulate(w, cfg, policy)
        assert a == b


def _abundant_case(rng):
    """Workload plus a config generous enough that every block is
    resident at once under every policy (block cap included)."""
    phases = _random_phases(rng)
    blocks = rng.randrange(1, 5)
    wpb = rng.randrange(1, 5)
    tpb = wpb * 32
    w = make_workload(phases, total_threads=blocks * tpb, tpb=tpb)
    regs = max(1, w.spec.regs_per_thread)
    smem = max(1, w.spec.smem_per_block)
    cfg = GpuConfig(
        registers_total=2 * blocks * tpb * regs,
        scratchpad_bytes=2 * blocks * smem,
        thread_slots=32 * ((2 * blocks * tpb) // 32),
        max_resident_blocks=blocks + rng.randrange(0, 4),
        issue_width=rng.choice([1, 2, 4]),
        mem_latency=rng.choice([20, 100, 400]),
    )
    return w, cfg


def test_policy_equivalence_under_abundance():
    rng = random.Random(2024)
    for _ in range(60):
        w, cfg = _abundant_case(rng)
        results = [simulate(w, cfg, p).total_cycles for p in ALL_POLICIES]
        assert results[0] == results[1] == results[2]


def _step_value(trace, t, idx, default=0):
    # trace rows are (cycle, live, cum_issued), sorted by cycle
    value = default
    for row in trace:
        if row[0] > t:
            break
        value = row[idx]
    return value


def test_virt_dominates_baseline_with_swap_disabled():
    # declining register demand, no barriers: dynamic deallocation frees
    # capacity for extra warps even with oversubscription off
    phases = [PhaseDescriptor(8, 64, 0, 0.5),
              PhaseDescriptor(16, 16, 0, 0.5),
              PhaseDescriptor(8, 16, 0, 0.25)]
    w = make_workload(phases, total_threads=1024, tpb=64)
    cfg = small_cfg(registers_total=16384, issue_width=2)
    base = simulate(w, cfg, Policy(BASELINE), collect_trace=True)
    virt = simulate(w, cfg,
                    Policy(VIRT, CoordinatorParams(o_max=1.0)),
                    collect_trace=True)
    assert virt.total_cycles <= base.total_cycles
    assert virt.swap_stall_cycles == 0
    assert virt.peak_swap == {"thread_slots": 0, "registers": 0,
                              "scratchpad": 0}
    cycles = sorted({row[0] for row in base.trace}
                    | {row[0] for row in virt.trace})
    for t in cycles:
        issued_b = _step_value(base.trace, t, 2)
        issued_v = _step_value(virt.trace, t, 2)
        assert issued_v >= issued_b
    # strictly more parallelism at some point once reservations shrink
    peaks_v = max(row[1] for row in virt.trace)
    peaks_b = max(row[1] for row in base.trace)
    assert peaks_v > peaks_b


def test_virt_oversubscription_pays_swap_stalls_but_finishes():
    # demand grows mid-kernel; with a tight register file the extra
    # concurrency only exists by spilling to swap
    phases = [PhaseDescriptor(6, 8, 256, 0.5, ends_with_barrier=True),
              PhaseDescriptor(6, 32, 256, 0.5)]
    w = make_workload(phases, total_threads=512, tpb=64)
    cfg = small_cfg(registers_total=4096, issue_width=2)
    params = CoordinatorParams(o_max=2.0, epoch_cycles=200)
    res = simulate(w, cfg, Policy(VIRT, params))
    assert res.total_cycles > 0
    assert res.peak_physical["registers"] <= cfg.registers_total


def test_unschedulable_static_allocation():
    w = make_workload([PhaseDescriptor(4, 300, 0, 0.0)], total_threads=256,
                      tpb=256)
    cfg = small_cfg()
    for kind in (BASELINE, WLM):
        with pytest.raises(UnschedulableError, match="static allocation"):
            simulate(w, cfg, Policy(kind))


def test_unschedulable_virtual_capacity():
    w = make_workload(
        [PhaseDescriptor(4, 8, 131072, 0.0, ends_with_barrier=True)],
        total_threads=64, tpb=64)
    with pytest.raises(UnschedulableError, match="virtual capacity"):
        simulate(w, small_cfg(), Policy(VIRT))


def test_wlm_partial_block_stalls_at_barrier():
    # room for one and a half blocks: wlm admits the extra warps but they
    # cannot pass the barrier until the rest of their block fits
    phases = [PhaseDescriptor(4, 32, 0, 0.5, ends_with_barrier=True),
              PhaseDescriptor(4, 32, 0, 0.5)]
    w = make_workload(phases, total_threads=512, tpb=128)
    cfg = small_cfg(registers_total=128 * 32 + 64 * 32, issue_width=2)
    base = simulate(w, cfg, Policy(BASELINE))
    wlm = simulate(w, cfg, Policy(WLM))
    assert wlm.peak_resident_warps > base.peak_resident_warps
    assert wlm.total_cycles <= base.total_cycles


def test_result_shape():
    w = make_workload([PhaseDescriptor(4, 8, 128, 0.5)])
    res = simulate(w, small_cfg(), Policy(VIRT))
    assert isinstance(res, SimResult)
    assert 0.0 < res.issue_utilization <= 1.0
    assert res.peak_resident_warps == 1
    assert res.peak_physical["scratchpad"] == 128
