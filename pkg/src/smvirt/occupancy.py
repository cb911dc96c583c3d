"""Static resource-limited admission.

Two admission disciplines over one SM's fixed capacities:

* block granularity: a block is resident only if its whole worst-case
  demand (threads, registers, scratchpad) fits, and the resident count is
  further capped by the scheduler's block limit;
* warp granularity (WLM): thread slots and registers are claimed one warp
  at a time, scratchpad still one block at a time on the block's first
  warp.  The scheduler block cap does not apply, since bookkeeping is
  per warp.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .workload import GpuConfig, ResourceSpec


@dataclass(frozen=True)
class AdmitDecision:
    outcome: str  # "admit" | "reject"
    limiting_resource: Optional[str] = None

    ADMIT = "admit"
    REJECT = "reject"

    def __post_init__(self):
        if self.outcome == self.REJECT and self.limiting_resource is None:
            raise ValueError("a rejection must name its limiting resource")
        if self.outcome == self.ADMIT and self.limiting_resource is not None:
            raise ValueError("an admission carries no limiting resource")

    @property
    def admitted(self) -> bool:
        return self.outcome == self.ADMIT


def _per_resource_block_limits(spec: ResourceSpec, cfg: GpuConfig) -> dict:
    """Blocks admissible under each constraint; zero-demand => unbounded."""
    limits = {"thread_slots": cfg.thread_slots // spec.threads_per_block}
    regs_per_block = spec.threads_per_block * spec.regs_per_thread
    limits["registers"] = (cfg.registers_total // regs_per_block
                           if regs_per_block else None)
    limits["scratchpad"] = (cfg.scratchpad_bytes // spec.smem_per_block
                            if spec.smem_per_block else None)
    limits["block_cap"] = cfg.max_resident_blocks
    return limits


def max_resident_blocks(spec: ResourceSpec, cfg: GpuConfig) -> int:
    """Blocks concurrently resident under static worst-case allocation.

    Returns 0 when a single block exceeds some capacity; the caller
    decides whether that is an error.
    """
    limits = _per_resource_block_limits(spec, cfg)
    return min(v for v in limits.values() if v is not None)


def limiting_resource(spec: ResourceSpec, cfg: GpuConfig) -> str:
    """Name of the constraint that binds max_resident_blocks.

    Ties break in the fixed order thread_slots, registers, scratchpad,
    block_cap.
    """
    limits = _per_resource_block_limits(spec, cfg)
    best = min(v for v in limits.values() if v is not None)
    for name in ("thread_slots", "registers", "scratchpad", "block_cap"):
        if limits[name] == best:
            return name
    raise AssertionError("unreachable")


@dataclass
class SmOccupancyState:
    """Mutable allocation ledger for warp-granularity admission."""

    cfg: GpuConfig
    slots_used: int = 0
    regs_used: int = 0
    smem_used: int = 0
    warps_per_resident_block: dict = field(default_factory=dict)

    @property
    def resident_blocks(self) -> int:
        return len(self.warps_per_resident_block)

    def free(self, kind: str) -> int:
        used = {"thread_slots": self.slots_used, "registers": self.regs_used,
                "scratchpad": self.smem_used}[kind]
        return self.cfg.capacity(kind) - used

    def release_block(self, block_id, spec: ResourceSpec) -> None:
        warps = self.warps_per_resident_block.pop(block_id)
        self.slots_used -= warps * self.cfg.warp_size
        self.regs_used -= warps * self.cfg.warp_size * spec.regs_per_thread
        if spec.smem_per_block:
            self.smem_used -= spec.smem_per_block


def wlm_admit(state: SmOccupancyState, block_id, spec: ResourceSpec,
              cfg: GpuConfig) -> AdmitDecision:
    """Admit one warp of `block_id`, deducting its demand on success.

    Checked in order: thread slots, registers, then scratchpad (the latter
    only for the first warp of a block, which claims the whole per-block
    allocation).
    """
    warp_regs = cfg.warp_size * spec.regs_per_thread
    if state.free("thread_slots") < cfg.warp_size:
        return AdmitDecision(AdmitDecision.REJECT, "thread_slots")
    if state.free("registers") < warp_regs:
        return AdmitDecision(AdmitDecision.REJECT, "registers")
    first_warp = block_id not in state.warps_per_resident_block
    if first_warp and state.free("scratchpad") < spec.smem_per_block:
        return AdmitDecision(AdmitDecision.REJECT, "scratchpad")
    state.slots_used += cfg.warp_size
    state.regs_used += warp_regs
    if first_warp:
        state.smem_used += spec.smem_per_block
        state.warps_per_resident_block[block_id] = 1
    else:
        state.warps_per_resident_block[block_id] += 1
    return AdmitDecision(AdmitDecision.ADMIT)
