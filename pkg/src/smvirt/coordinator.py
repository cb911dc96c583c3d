"""Adaptive runtime control of the virtualized resources.

The coordinator admits work at phase boundaries, keeps a FIFO queue of
units waiting for space, and steers the per-resource oversubscription
factors from epoch telemetry (issue-slot utilization versus swap-stall
pressure).

Admission accounting is reservation based: every admitted owner reserves
its worst-case demand over its *remaining* phases against the virtual
capacity.  Actual allocations (which track the current phase only) can
therefore never exhaust the virtual space, so an in-flight phase change
always proceeds; only fresh admissions queue.  As owners pass their peak
phases their reservations shrink, opening room that static worst-case
allocation would have kept occupied for the whole kernel.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

from .virt import PHYSICAL, AllocationOutcome, MappingTable, OversubLimits
from .workload import RESOURCE_KINDS, PhaseDescriptor


@dataclass(frozen=True)
class CoordinatorParams:
    u_target: float = 0.9
    s_max: float = 0.1
    step: float = 0.125
    o_max: float = 2.0
    epoch_cycles: int = 1000

    def __post_init__(self):
        if not 0.0 < self.u_target <= 1.0:
            raise ValueError("u_target must lie in (0, 1]")
        if self.s_max < 0 or self.step <= 0 or self.epoch_cycles < 1:
            raise ValueError("bad coordinator parameter")
        if self.o_max < 1.0:
            raise ValueError("o_max must be >= 1.0")


@dataclass
class EpochTelemetry:
    issue_slots_used: int = 0
    issue_slots_total: int = 0
    swap_stall_cycles: int = 0
    busy_cycles: int = 0

    def utilization(self) -> float:
        return (self.issue_slots_used / self.issue_slots_total
                if self.issue_slots_total else 0.0)

    def swap_ratio(self) -> float:
        return (self.swap_stall_cycles / self.busy_cycles
                if self.busy_cycles else 0.0)

    def reset(self) -> None:
        self.issue_slots_used = 0
        self.issue_slots_total = 0
        self.swap_stall_cycles = 0
        self.busy_cycles = 0


@dataclass(frozen=True)
class PhaseAdmission:
    queued: bool
    stall_cycles: int = 0
    stall_by_owner: tuple = ()  # (owner, stall) pairs for multi-owner calls

    def __post_init__(self):
        if self.stall_cycles < 0:
            raise ValueError("stall_cycles must be >= 0")

    @property
    def proceeded(self) -> bool:
        return not self.queued

    def owner_stall(self, owner) -> int:
        for own, stall in self.stall_by_owner:
            if own == owner:
                return stall
        return 0


QUEUED = PhaseAdmission(queued=True)


@dataclass
class ResourceChange:
    """Target state of one owner on one table after a phase boundary.

    `may_swap` marks resources whose overflow is allowed to land in (or
    evict others into) the swap space; callers keep it off for resources
    whose transfer cost exceeds any plausible gain, making the change
    queue for physical room instead.
    """

    kind: str
    owner: object
    new_size: int
    new_reserve: Optional[int] = None  # defaults to new_size
    may_swap: bool = True

    @property
    def reserve(self) -> int:
        return self.new_size if self.new_reserve is None else self.new_reserve


@dataclass
class PendingItem:
    owner: object
    changes: Optional[list[ResourceChange]] = None
    refresh: Optional[object] = None  # () -> list[ResourceChange]

    def current_changes(self) -> list[ResourceChange]:
        return self.refresh() if self.refresh is not None else self.changes


class Coordinator:
    """Oversubscription limits, pending queue and boundary processing."""

    def __init__(self, params: CoordinatorParams,
                 tables: dict[str, MappingTable]):
        self.params = params
        self.tables = tables
        self.limits = OversubLimits(o_max=params.o_max)
        self.pending: deque[PendingItem] = deque()
        self.telemetry = EpochTelemetry()
        self.last_blocked: Optional[str] = None
        self.reserved = {kind: 0 for kind in tables}
        self._owner_reserved: dict[tuple[str, object], int] = {}
        # owners parked mid-flight at a phase boundary drain ahead of new
        # admissions: they hold resources, so finishing them frees capacity
        self.pending_growth: deque[PendingItem] = deque()

    # -- reservations ------------------------------------------------------

    def owner_reservation(self, kind: str, owner) -> int:
        return self._owner_reserved.get((kind, owner), 0)

    def _set_reservation(self, kind: str, owner, amount: int) -> None:
        key = (kind, owner)
        self.reserved[kind] += amount - self._owner_reserved.get(key, 0)
        if amount:
            self._owner_reserved[key] = amount
        else:
            self._owner_reserved.pop(key, None)

    def _reservation_blocker(self, changes: list[ResourceChange]) -> Optional[str]:
        """First resource whose virtual capacity the combined reservations
        would exceed, checked in the fixed kind order; None when all fit."""
        for kind in RESOURCE_KINDS:
            delta = sum(ch.reserve - self.owner_reservation(kind, ch.owner)
                        for ch in changes if ch.kind == kind)
            if delta == 0:
                continue
            table = self.tables[kind]
            if (self.reserved[kind] + delta
                    > self.limits.get(kind) * table.capacity_physical):
                return kind
        return None

    # -- phase boundaries ----------------------------------------------------

    def apply_changes(self, changes: list[ResourceChange],
                      classify=lambda owner: None,
                      force_swap_ok: bool = False) -> PhaseAdmission:
        """Atomically retarget each (table, owner) holding to its new size.

        Shrinks run before grows.  A grow that does not fit on chip first
        evicts from non-runnable owners (per `classify`), then falls back
        to a swap placement; changes with may_swap off instead queue for
        physical room (`force_swap_ok` overrides that, used to unwedge a
        long-stuck queue head).  Any denial rolls every step back and the
        caller's unit must queue.
        """
        blocked = self._reservation_blocker(changes)
        if blocked is not None:
            self.last_blocked = blocked
            return QUEUED
        journal: list[tuple[MappingTable, int, object]] = []
        stalls: dict = {}
        ordered = sorted(
            (ch for ch in changes),
            key=lambda ch: ch.new_size - self.tables[ch.kind].owner_holding(ch.owner))
        for ch in ordered:
            table = self.tables[ch.kind]
            current = table.owner_holding(ch.owner)
            if ch.new_size == current:
                continue
            swap_ok = ch.may_swap or force_swap_ok
            if not swap_ok:
                entries = table.entries
                current_physical = sum(
                    entries[eid].size for eid in table.owner_entries(ch.owner)
                    if entries[eid].location == PHYSICAL)
                if ch.new_size > current_physical + table.physical_free:
                    self.last_blocked = ch.kind
                    for tbl, eid, old in reversed(journal):
                        tbl.restore_entry(eid, old)
                    return QUEUED
            for eid in table.owner_entries(ch.owner):
                journal.append((table, eid, table.snapshot_entry(eid)))
                table.release(eid)
            if ch.new_size == 0:
                continue
            factor = self.limits.get(ch.kind)
            fits_virtual = (table.total_in_use() + ch.new_size
                            <= factor * table.capacity_physical)
            deficit = ch.new_size - table.physical_free
            if deficit > 0 and fits_virtual and swap_ok:
                evicted = table.evict(deficit, classify)
                if evicted is not None:
                    victims, evict_stall = evicted
                    stalls[ch.owner] = stalls.get(ch.owner, 0) + evict_stall
                    for eid in victims:
                        entry = table.snapshot_entry(eid)
                        journal.append(
                            (table, eid, replace(entry, location=PHYSICAL)))
            out = table.acquire(ch.new_size, ch.owner, factor)
            if not out.ok:
                self.last_blocked = ch.kind
                for tbl, eid, old in reversed(journal):
                    tbl.restore_entry(eid, old)
                return QUEUED
            journal.append((table, out.entry_id, None))
            if out.stall_cycles:
                stalls[ch.owner] = stalls.get(ch.owner, 0) + out.stall_cycles
        for ch in changes:
            self._set_reservation(ch.kind, ch.owner, ch.reserve)
        return PhaseAdmission(queued=False, stall_cycles=sum(stalls.values()),
                              stall_by_owner=tuple(sorted(stalls.items())))

    def on_phase_boundary(self, owner, next_phase: PhaseDescriptor,
                          warp_size: int = 32,
                          classify=lambda owner: None) -> PhaseAdmission:
        """Retarget `owner`'s registers and scratchpad to `next_phase`.

        Convenience surface for a single owner holding its own entries;
        the engine drives apply_changes directly so that scratchpad can be
        owned at block granularity.
        """
        changes = [
            ResourceChange("registers", owner, next_phase.regs * warp_size),
            ResourceChange("scratchpad", owner, next_phase.smem),
        ]
        outcome = self.apply_changes(changes, classify)
        if outcome.queued:
            self.enqueue_growth(PendingItem(owner, changes))
        return outcome

    def release_owner(self, kind: str, owner) -> int:
        """Drop all of an owner's entries and its reservation."""
        table = self.tables[kind]
        freed = sum(table.release(eid) for eid in table.owner_entries(owner))
        self._set_reservation(kind, owner, 0)
        return freed

    # -- pending queue -------------------------------------------------------

    def enqueue(self, item: PendingItem) -> None:
        self.pending.append(item)

    def enqueue_growth(self, item: PendingItem) -> None:
        self.pending_growth.append(item)

    def _drain(self, queue, classify, force: bool, admitted: list) -> bool:
        """FIFO-drain one queue; returns False when its head blocks.

        With `force` the head may fall back to swap placement and
        eviction, which breaks the hold-and-wait cycle between barrier
        waiters and their queued siblings; the engine requests it only
        when nothing else in the system can make progress.
        """
        while queue:
            item = queue[0]
            outcome = self.apply_changes(item.current_changes(), classify)
            if outcome.queued and force:
                outcome = self.apply_changes(
                    item.current_changes(), classify, force_swap_ok=True)
            if outcome.queued:
                return False
            queue.popleft()
            admitted.append((item.owner, outcome))
        return True

    def schedule_pending(self, classify=lambda owner: None,
                         force: bool = False) -> list:
        """Admit parked phase transitions, then fresh admissions, from the
        heads of their queues while admissions succeed.

        Strict FIFO within each queue: the first unit that still does not
        fit blocks everything behind it, whatever later units might need.
        """
        admitted: list = []
        if self._drain(self.pending_growth, classify, force, admitted):
            self._drain(self.pending, classify, force, admitted)
        return admitted

    # -- virtual space control ------------------------------------------------

    def update_virtual_space(self, telemetry: Optional[EpochTelemetry] = None
                             ) -> OversubLimits:
        """Adapt one resource's oversubscription factor from epoch telemetry.

        Swap pressure beyond s_max shrinks the most-swapped resource's
        virtual space; otherwise unmet admissions with spare issue slots
        grow the space of the resource that blocked most recently.
        """
        t = telemetry if telemetry is not None else self.telemetry
        u, s = t.utilization(), t.swap_ratio()
        if s > self.params.s_max:
            kind = max(self.tables, key=lambda k: self.tables[k].swap_in_use)
            if self.tables[kind].swap_in_use > 0:
                floor = self.reserved[kind] / self.tables[kind].capacity_physical
                self.limits.lower_for(kind, self.params.step, floor=floor)
        elif (self.pending and u < self.params.u_target
              and self.last_blocked is not None):
            self.limits.raise_for(self.last_blocked, self.params.step)
        t.reset()
        return self.limits
