"""Deterministic cycle-level simulation of warps on one SM.

The timing model is throughput oriented: each cycle up to `issue_width`
ready warps issue one instruction each in round-robin id order, memory
instructions block their warp for `mem_latency` cycles, and lost
parallelism (not pipeline detail) is what stretches execution.  Cycles
with no runnable warp are skipped in bulk, so a run costs roughly one
loop iteration per issued instruction.

Three admission policies share the loop:

* baseline: whole blocks are admitted while the static worst-case
  occupancy limit allows, and hold their full declaration until the
  block completes;
* wlm: thread slots and registers are admitted warp by warp (scratchpad
  still per block, and a partially admitted block's warps stall at
  barriers until the rest arrive);
* virt: per-phase demands are acquired and released dynamically through
  the coordinator, with oversubscription spilling to a swap space.
"""

from __future__ import annotations

import heapq
from bisect import bisect_left, insort
from dataclasses import dataclass
from typing import Optional

from .coordinator import (Coordinator, CoordinatorParams, PendingItem,
                          ResourceChange)
from .occupancy import SmOccupancyState, max_resident_blocks, wlm_admit
from .virt import SWAP, make_tables
from .workload import GpuConfig, WorkloadSpec

BASELINE = "baseline"
WLM = "wlm"
VIRT = "virt"
POLICY_KINDS = (BASELINE, WLM, VIRT)

# warp statuses
_READY = 0
_MEM_BLOCKED = 1
_SWAP_STALLED = 2
_AT_BARRIER = 3
_PENDING = 4
_FINISHED = 5


class UnschedulableError(ValueError):
    """The workload cannot be admitted under the selected policy."""


@dataclass(frozen=True)
class Policy:
    kind: str
    params: CoordinatorParams = CoordinatorParams()

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")


@dataclass(frozen=True)
class SimResult:
    total_cycles: int
    instructions_issued: int
    issue_utilization: float
    swap_stall_cycles: int
    peak_resident_warps: int
    peak_physical: dict
    peak_swap: dict
    trace: Optional[list] = None


def mem_instruction_indices(insts: int, mem_ratio: float) -> tuple[int, ...]:
    """Deterministic placement of the phase's memory instructions:
    m = round(insts * ratio) ops spread evenly across the phase."""
    m = int(insts * mem_ratio + 0.5)
    if m == 0:
        return ()
    return tuple(int((k + 0.5) * insts / m) for k in range(m))


def warp_phase_cycles(phase, cfg: GpuConfig) -> int:
    """Analytic single-warp cost of one phase: one cycle per issue plus
    the full memory latency behind every memory instruction."""
    return phase.insts + len(mem_instruction_indices(
        phase.insts, phase.mem_ratio)) * cfg.mem_latency


class _Warp:
    __slots__ = ("wid", "block", "phase", "issued", "mem_k", "status", "until")

    def __init__(self, wid, block):
        self.wid = wid
        self.block = block
        self.phase = 0
        self.issued = 0
        self.mem_k = 0
        self.status = _PENDING
        self.until = 0


class _Block:
    __slots__ = ("bid", "arrived", "finished", "admitted")

    def __init__(self, bid):
        self.bid = bid
        self.arrived = 0
        self.finished = 0
        self.admitted = 0


class _Sim:
    def __init__(self, workload: WorkloadSpec, cfg: GpuConfig, policy: Policy,
                 collect_trace: bool = False):
        self.cfg = cfg
        self.policy = policy
        self.spec = workload.spec
        self.spec.validate(cfg.warp_size)
        kernel = workload.kernel
        self.phases = kernel.phases
        self.n_phases = len(self.phases)
        self.phase_mem = tuple(mem_instruction_indices(p.insts, p.mem_ratio)
                               for p in self.phases)
        self.suffix_regs = self._suffix(tuple(p.regs for p in self.phases))
        self.suffix_smem = self._suffix(tuple(p.smem for p in self.phases))

        self.num_blocks = workload.num_blocks
        self.wpb = self.spec.threads_per_block // cfg.warp_size
        total_warps = self.num_blocks * self.wpb  # tail block padded to full
        self.warps = [_Warp(w, w // self.wpb) for w in range(total_warps)]
        self.blocks = [_Block(b) for b in range(self.num_blocks)]

        self.cycle = 0
        self.ready: list[int] = []  # sorted wids currently able to issue
        self.heap: list[tuple[int, int]] = []  # (wake cycle, wid)
        self.rr = 0
        self.issued_total = 0
        self.swap_stalls = 0
        self.blocks_done = 0
        self.mem_blocked = 0
        self.resident_warps = 0
        self.peak_resident_warps = 0
        self.peak_phys = {"thread_slots": 0, "registers": 0, "scratchpad": 0}
        self.trace = [] if collect_trace else None
        self.activity = False
        self.forced_stall = False
        self.parked: set[int] = set()  # wids queued at a phase boundary

        if policy.kind == BASELINE:
            self._init_baseline()
        elif policy.kind == WLM:
            self._init_wlm()
        else:
            self._init_virt()

    @staticmethod
    def _suffix(values):
        out = [0] * (len(values) + 1)
        for i in range(len(values) - 1, -1, -1):
            out[i] = max(values[i], out[i + 1])
        return tuple(out)

    # -- policy setup ------------------------------------------------------

    def _init_baseline(self):
        self.limit = max_resident_blocks(self.spec, self.cfg)
        if self.limit == 0:
            raise UnschedulableError("unschedulable under static allocation")
        self.resident = 0
        self.next_block = 0

    def _init_wlm(self):
        if max_resident_blocks(self.spec, self.cfg) == 0:
            raise UnschedulableError("unschedulable under static allocation")
        self.occ = SmOccupancyState(self.cfg)
        self.next_warp = 0

    def _init_virt(self):
        cfg, spec = self.cfg, self.spec
        o_max = self.policy.params.o_max
        block_demands = (
            ("thread_slots", spec.threads_per_block),
            ("registers", spec.threads_per_block * spec.regs_per_thread),
            ("scratchpad", spec.smem_per_block),
        )
        # with barriers a whole block's warps must be able to coexist in
        # the virtual space, or the barrier could never clear
        whole_block = any(p.ends_with_barrier for p in self.phases)
        for kind, demand in block_demands:
            need = demand
            if not whole_block and kind != "scratchpad":
                need = demand // self.wpb
            if need > o_max * cfg.capacity(kind):
                raise UnschedulableError(
                    f"unschedulable: {kind} demand exceeds virtual capacity "
                    f"(o_max={o_max})")
        self.tables = make_tables(cfg)
        self.coord = Coordinator(self.policy.params, self.tables)
        self.next_epoch = self.policy.params.epoch_cycles
        if whole_block:
            # barrier kernels admit block-atomically: a partially admitted
            # block would only stall at its first barrier
            for blk in self.blocks:
                self.coord.enqueue(PendingItem(
                    -(blk.bid + 1),
                    refresh=self._block_admission_changes_for(blk)))
        else:
            for w in self.warps:
                self.coord.enqueue(PendingItem(
                    w.wid, refresh=self._admission_changes_for(w)))

    # -- virt helpers --------------------------------------------------------

    def _smem_slice(self, wid, smem):
        """The warp's share of a per-block scratchpad demand; shares are
        exact (the first blocks' warps absorb the remainder)."""
        widx = wid % self.wpb
        share, rem = divmod(smem, self.wpb)
        return share + (1 if widx < rem else 0)

    def _changes_for_phase(self, w, p, admission):
        wsz = self.cfg.warp_size
        changes = [
            ResourceChange("registers", w.wid, self.phases[p].regs * wsz,
                           self.suffix_regs[p] * wsz, may_swap=False),
            ResourceChange("scratchpad", w.wid,
                           self._smem_slice(w.wid, self.phases[p].smem),
                           self._smem_slice(w.wid, self.suffix_smem[p]),
                           may_swap=False),
        ]
        if admission:
            changes.insert(0, ResourceChange("thread_slots", w.wid, wsz, wsz))
        return changes

    def _admission_changes_for(self, w):
        return lambda: self._changes_for_phase(w, 0, admission=True)

    def _block_admission_changes_for(self, blk):
        def build():
            changes = []
            for w in self.warps[blk.bid * self.wpb:(blk.bid + 1) * self.wpb]:
                changes.extend(self._changes_for_phase(w, 0, admission=True))
            return changes
        return build

    def _transition_changes_for(self, w):
        return lambda: self._changes_for_phase(w, w.phase + 1, admission=False)

    def _block_changes_for(self, blk):
        def build():
            changes = []
            for w in self.warps[blk.bid * self.wpb:(blk.bid + 1) * self.wpb]:
                changes.extend(
                    self._changes_for_phase(w, w.phase + 1, admission=False))
            return changes
        return build

    def _classify(self, mover_wid):
        warps = self.warps

        def classify(owner):
            if owner == mover_wid:
                return None
            st = warps[owner].status
            if st == _AT_BARRIER:
                return 0
            if st == _PENDING:
                return 1
            return None
        return classify

    # -- main loop -----------------------------------------------------------

    def run(self) -> SimResult:
        cfg = self.cfg
        virt = self.policy.kind == VIRT
        while self.blocks_done < self.num_blocks:
            prev = self.cycle
            self.cycle += 1
            force = False
            if prev > 0 and not self.ready and not self.activity:
                if self.heap:
                    jump = self.heap[0][0]
                    if virt and (self.coord.pending
                                 or self.coord.pending_growth):
                        jump = min(jump, self.next_epoch)
                    if jump > self.cycle:
                        self.cycle = jump
                elif virt and (self.coord.pending
                               or self.coord.pending_growth):
                    # nothing can run or wake: only a forced admission
                    # (swap placement allowed) can unwedge the system
                    if self.forced_stall:
                        raise RuntimeError("simulation stalled with work left")
                    force = True
                    self.forced_stall = True
                else:
                    raise RuntimeError("simulation stalled with work left")
            if self.activity:
                self.forced_stall = False
            self.activity = False
            if virt:
                span = self.cycle - prev
                t = self.coord.telemetry
                t.busy_cycles += span
                t.issue_slots_total += span * cfg.issue_width

            self._admit(force)
            completed = self._issue()
            self._wake(completed)
            for wid in completed:
                self._complete(wid)
            if self.trace is not None:
                self.trace.append((self.cycle,
                                   len(self.ready) + self.mem_blocked,
                                   self.issued_total))
        total = self.cycle
        util = (self.issued_total / (total * cfg.issue_width)) if total else 0.0
        peak_swap = {k: 0 for k in self.peak_phys}
        peak_phys = dict(self.peak_phys)
        if virt:
            for kind, table in self.tables.items():
                peak_phys[kind] = table.peak_physical
                peak_swap[kind] = table.peak_swap
        return SimResult(
            total_cycles=total,
            instructions_issued=self.issued_total,
            issue_utilization=util,
            swap_stall_cycles=self.swap_stalls,
            peak_resident_warps=self.peak_resident_warps,
            peak_physical=peak_phys,
            peak_swap=peak_swap,
            trace=self.trace,
        )

    # -- step 1: admission ----------------------------------------------------

    def _admit(self, force=False):
        kind = self.policy.kind
        if kind == BASELINE:
            while (self.resident < self.limit
                   and self.next_block < self.num_blocks):
                bid = self.next_block
                self.next_block += 1
                self.resident += 1
                blk = self.blocks[bid]
                blk.admitted = self.wpb
                for w in self.warps[bid * self.wpb:(bid + 1) * self.wpb]:
                    w.status = _READY
                    insort(self.ready, w.wid)
                self._note_admitted(self.wpb)
                self._note_static_peaks(self.resident)
                self.activity = True
        elif kind == WLM:
            total = len(self.warps)
            occ = self.occ
            while self.next_warp < total:
                w = self.warps[self.next_warp]
                if not wlm_admit(occ, w.block, self.spec, self.cfg).admitted:
                    break
                self.next_warp += 1
                self.blocks[w.block].admitted += 1
                w.status = _READY
                insort(self.ready, w.wid)
                self._note_admitted(1)
                self.activity = True
            peaks = self.peak_phys
            if occ.slots_used > peaks["thread_slots"]:
                peaks["thread_slots"] = occ.slots_used
            if occ.regs_used > peaks["registers"]:
                peaks["registers"] = occ.regs_used
            if occ.smem_used > peaks["scratchpad"]:
                peaks["scratchpad"] = occ.smem_used
        else:
            if self.cycle >= self.next_epoch:
                self.coord.update_virtual_space()
                self.next_epoch += self.policy.params.epoch_cycles
            if self.coord.pending or self.coord.pending_growth:
                classify = self._classify(mover_wid=None)
                admitted = self.coord.schedule_pending(classify, force)
                for owner, outcome in admitted:
                    if owner < 0:  # a whole block: admission or crossing
                        blk = self.blocks[-owner - 1]
                        lo = blk.bid * self.wpb
                        siblings = self.warps[lo:lo + self.wpb]
                        if siblings[0].wid in self.parked:
                            for w in siblings:
                                self.parked.discard(w.wid)
                            self._advance_group(siblings,
                                                siblings[0].phase + 1,
                                                outcome)
                        else:
                            blk.admitted = self.wpb
                            self._note_admitted(self.wpb)
                            for w in siblings:
                                w.issued = 0
                                w.mem_k = 0
                                self._resume(w, outcome.owner_stall(w.wid))
                        self.activity = True
                        continue
                    w = self.warps[owner]
                    if owner in self.parked:  # resumed phase transition
                        self.parked.discard(owner)
                        w.phase += 1
                    else:  # fresh admission at phase 0
                        self.blocks[w.block].admitted += 1
                        self._note_admitted(1)
                    w.issued = 0
                    w.mem_k = 0
                    self._resume(w, outcome.stall_cycles)
                    self.activity = True

    def _note_admitted(self, n):
        self.resident_warps += n
        if self.resident_warps > self.peak_resident_warps:
            self.peak_resident_warps = self.resident_warps

    def _note_static_peaks(self, resident_blocks):
        spec = self.spec
        usage = {
            "thread_slots": resident_blocks * spec.threads_per_block,
            "registers": (resident_blocks * spec.threads_per_block
                          * spec.regs_per_thread),
            "scratchpad": resident_blocks * spec.smem_per_block,
        }
        for k, v in usage.items():
            if v > self.peak_phys[k]:
                self.peak_phys[k] = v

    # -- step 2: issue ---------------------------------------------------------

    def _issue(self):
        ready = self.ready
        n = len(ready)
        if n == 0:
            return []
        k = self.cfg.issue_width
        if k > n:
            k = n
        start = bisect_left(ready, self.rr)
        picked = [ready[(start + i) % n] for i in range(k)]
        self.rr = picked[-1] + 1
        completed = []
        warps, phases, phase_mem = self.warps, self.phases, self.phase_mem
        mem_latency = self.cfg.mem_latency
        cycle = self.cycle
        for wid in picked:
            w = warps[wid]
            i = w.issued
            w.issued = i + 1
            mem = phase_mem[w.phase]
            if w.mem_k < len(mem) and mem[w.mem_k] == i:
                w.mem_k += 1
                w.status = _MEM_BLOCKED
                w.until = cycle + mem_latency
                ready.remove(wid)
                self.mem_blocked += 1
                heapq.heappush(self.heap, (w.until, wid))
            elif w.issued == phases[w.phase].insts:
                completed.append(wid)
        self.issued_total += k
        if self.policy.kind == VIRT:
            self.coord.telemetry.issue_slots_used += k
        self.activity = True
        return completed

    # -- step 3: expiry ----------------------------------------------------------

    def _wake(self, completed):
        heap = self.heap
        cycle = self.cycle
        while heap and heap[0][0] <= cycle:
            _, wid = heapq.heappop(heap)
            w = self.warps[wid]
            if w.status == _MEM_BLOCKED:
                self.mem_blocked -= 1
                if w.issued == self.phases[w.phase].insts:
                    completed.append(wid)  # phase ends at data return
                    continue
            w.status = _READY
            insort(self.ready, wid)
            self.activity = True

    # -- steps 4/5: boundaries, barriers, completion -------------------------------

    def _complete(self, wid):
        w = self.warps[wid]
        self._pop_if_ready(wid)
        phase = self.phases[w.phase]
        if phase.ends_with_barrier:
            blk = self.blocks[w.block]
            blk.arrived += 1
            w.status = _AT_BARRIER
            if blk.arrived == self.wpb:
                blk.arrived = 0
                if self.policy.kind == VIRT:
                    self._virt_block_cross(blk)
                else:
                    for sibling in self.warps[blk.bid * self.wpb:
                                              (blk.bid + 1) * self.wpb]:
                        self._cross(sibling, resuming=True)
        else:
            self._cross(w)
        self.activity = True

    def _pop_if_ready(self, wid):
        ready = self.ready
        idx = bisect_left(ready, wid)
        if idx < len(ready) and ready[idx] == wid:
            del ready[idx]

    def _cross(self, w, resuming=False):
        if self.policy.kind == VIRT:
            self._virt_cross(w, resuming)
        else:
            p1 = w.phase + 1
            if p1 == self.n_phases:
                self._finish_static(w)
            else:
                w.phase = p1
                w.issued = 0
                w.mem_k = 0
                self._resume(w, 0)

    def _resume(self, w, stall):
        if stall > 0:
            w.status = _SWAP_STALLED
            w.until = self.cycle + stall
            heapq.heappush(self.heap, (w.until, w.wid))
            self.swap_stalls += stall
            if self.policy.kind == VIRT:
                self.coord.telemetry.swap_stall_cycles += stall
        else:
            w.status = _READY
            insort(self.ready, w.wid)

    def _finish_static(self, w):
        w.status = _FINISHED
        self.resident_warps -= 1
        blk = self.blocks[w.block]
        blk.finished += 1
        if blk.finished == self.wpb:
            self.blocks_done += 1
            if self.policy.kind == BASELINE:
                self.resident -= 1
            else:
                self.occ.release_block(blk.bid, self.spec)

    def _virt_cross(self, w, resuming):
        blk = self.blocks[w.block]
        coord = self.coord
        p1 = w.phase + 1
        classify = self._classify(mover_wid=w.wid)
        if p1 == self.n_phases:
            out = coord.apply_changes([
                ResourceChange("thread_slots", w.wid, 0, 0),
                ResourceChange("registers", w.wid, 0, 0),
                ResourceChange("scratchpad", w.wid, 0, 0),
            ], classify)
            assert out.proceeded  # pure release cannot be denied
            w.status = _FINISHED
            self.resident_warps -= 1
            blk.finished += 1
            if blk.finished == self.wpb:
                self.blocks_done += 1
            return
        out = coord.apply_changes(
            self._changes_for_phase(w, p1, admission=False), classify)
        if out.queued:
            # park holding the current phase's resources until space frees
            w.status = _PENDING
            self.parked.add(w.wid)
            coord.enqueue_growth(PendingItem(
                w.wid, refresh=self._transition_changes_for(w)))
            return
        stall = out.stall_cycles
        if resuming:
            stall += self._swap_in_owner(w.wid)
        w.phase = p1
        w.issued = 0
        w.mem_k = 0
        self._resume(w, stall)

    def _virt_block_cross(self, blk):
        """Cross a whole block's barrier atomically: either every warp
        moves to the next phase or the block parks as one unit, so a
        single short-on-space warp cannot strand its siblings."""
        siblings = self.warps[blk.bid * self.wpb:(blk.bid + 1) * self.wpb]
        p1 = siblings[0].phase + 1
        coord = self.coord
        movers = set(w.wid for w in siblings)
        base = self._classify(mover_wid=None)
        classify = lambda owner: None if owner in movers else base(owner)
        if p1 == self.n_phases:
            for w in siblings:
                self._virt_cross(w, resuming=False)
            return
        changes = self._block_changes_for(blk)()
        out = coord.apply_changes(changes, classify)
        if out.queued:
            for w in siblings:
                w.status = _PENDING
                self.parked.add(w.wid)
            coord.enqueue_growth(PendingItem(
                -(blk.bid + 1), refresh=self._block_changes_for(blk)))
            return
        self._advance_group(siblings, p1, out)

    def _advance_group(self, siblings, p1, outcome):
        """Move a block's warps to their next phase together.  Each warp
        pays its own placement stall plus its own context swap-in;
        transfers overlap (no swap bandwidth contention is modeled), so
        nothing is summed across the block."""
        for w in siblings:
            w.phase = p1
            w.issued = 0
            w.mem_k = 0
            self._resume(w, outcome.owner_stall(w.wid)
                         + self._swap_in_owner(w.wid))

    def _swap_in_owner(self, wid):
        """Charge and (where room allows) relocate swap-resident state that
        persists across a barrier: the warp's own slot context and
        registers.  Scratchpad is repriced by the boundary transition
        itself, since a new phase starts from fresh buffer contents."""
        stall = 0
        for kind in ("thread_slots", "registers"):
            table = self.tables[kind]
            for eid in table.owner_entries(wid):
                entry = table.entries[eid]
                if entry.location == SWAP:
                    if entry.size <= table.physical_free:
                        stall += table.swap_in(eid)
                    else:
                        stall += table.transfer_stall(entry.size)
        return stall


def simulate(workload: WorkloadSpec, cfg: GpuConfig, policy: Policy,
             collect_trace: bool = False) -> SimResult:
    """Run `workload` to completion on one SM under `policy`.

    Pure function of its inputs: identical arguments produce identical
    results, including telemetry.
    """
    return _Sim(workload, cfg, policy, collect_trace).run()
