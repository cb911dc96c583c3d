"""Resource mapping tables and swap-space accounting.

Each virtualized resource (thread slots, registers, scratchpad) has one
MappingTable that locates every live allocation in either the physical
on-chip space or a swap space in memory.  The virtual capacity visible to
allocation is an oversubscription factor times the physical capacity;
placements that overflow the physical space land in swap and charge a
stall proportional to the transferred chunks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

PHYSICAL = "physical"
SWAP = "swap"


@dataclass
class Entry:
    owner: object
    size: int
    location: str


@dataclass(frozen=True)
class AllocationOutcome:
    placed: str  # "physical" | "swap" | "denied"
    entry_id: Optional[int] = None
    stall_cycles: int = 0
    reason: Optional[str] = None

    DENIED = "denied"

    @property
    def ok(self) -> bool:
        return self.placed != self.DENIED


class MappingTable:
    """Virtual -> {physical, swap} mapping for one resource kind."""

    def __init__(self, kind: str, capacity_physical: int, chunk: int,
                 swap_latency: int):
        self.kind = kind
        self.capacity_physical = capacity_physical
        self.chunk = chunk
        self.swap_latency = swap_latency
        self.entries: dict[int, Entry] = {}
        self.physical_in_use = 0
        self.swap_in_use = 0
        self.peak_physical = 0
        self.peak_swap = 0
        self._next_id = 0
        self._by_owner: dict[object, list[int]] = {}

    # -- queries ---------------------------------------------------------

    @property
    def physical_free(self) -> int:
        return self.capacity_physical - self.physical_in_use

    def total_in_use(self) -> int:
        return self.physical_in_use + self.swap_in_use

    def owner_entries(self, owner) -> list[int]:
        return list(self._by_owner.get(owner, ()))

    def owner_holding(self, owner) -> int:
        entries = self.entries
        return sum(entries[eid].size for eid in self._by_owner.get(owner, ()))

    def transfer_stall(self, size: int) -> int:
        return math.ceil(size / self.chunk) * self.swap_latency

    def check_conservation(self) -> None:
        phys = sum(e.size for e in self.entries.values()
                   if e.location == PHYSICAL)
        swap = sum(e.size for e in self.entries.values() if e.location == SWAP)
        assert phys == self.physical_in_use, self.kind
        assert swap == self.swap_in_use, self.kind
        assert self.physical_in_use <= self.capacity_physical, self.kind

    # -- operations ------------------------------------------------------

    def acquire(self, size: int, owner, factor: float = 1.0) -> AllocationOutcome:
        """Place `size` units for `owner`.

        Physical when it fits on chip, swap when the virtual space
        (factor x physical capacity) still has room, denied otherwise.
        """
        if size < 0:
            raise ValueError("allocation size must be >= 0")
        if self.total_in_use() + size > factor * self.capacity_physical:
            return AllocationOutcome(AllocationOutcome.DENIED,
                                     reason="virtual-space-exhausted")
        if size <= self.physical_free:
            eid = self._insert(Entry(owner, size, PHYSICAL))
            return AllocationOutcome(PHYSICAL, eid)
        eid = self._insert(Entry(owner, size, SWAP))
        return AllocationOutcome(SWAP, eid, self.transfer_stall(size))

    def release(self, eid: int) -> int:
        entry = self.entries.pop(eid, None)
        if entry is None:
            raise KeyError(f"release of unknown allocation id {eid}")
        self._unindex(eid, entry.owner)
        if entry.location == PHYSICAL:
            self.physical_in_use -= entry.size
        else:
            self.swap_in_use -= entry.size
        return entry.size

    def swap_in(self, eid: int) -> int:
        """Relocate a swap entry into physical space; returns the stall."""
        entry = self.entries[eid]
        if entry.location != SWAP:
            raise ValueError(f"allocation {eid} is not in swap")
        if entry.size > self.physical_free:
            raise ValueError("insufficient physical space; evict first")
        entry.location = PHYSICAL
        self.swap_in_use -= entry.size
        self.physical_in_use += entry.size
        self.peak_physical = max(self.peak_physical, self.physical_in_use)
        return self.transfer_stall(entry.size)

    def evict(self, needed: int,
              classify: Callable[[object], Optional[int]]
              ) -> Optional[tuple[list[int], int]]:
        """Move physical entries of evictable owners to swap until at
        least `needed` units are free.

        `classify` maps an owner to an eviction class (lower evicts first;
        barrier-waiters before idle ones) or None for pinned owners.
        Whole entries move, oldest first within a class.  Returns None
        when the evictable set cannot cover the request.
        """
        if needed <= 0:
            return [], 0
        candidates = []
        for eid, e in self.entries.items():
            if e.location != PHYSICAL or e.size == 0:
                continue
            rank = classify(e.owner)
            if rank is not None:
                candidates.append((rank, eid))
        candidates.sort()
        victims: list[int] = []
        stall = 0
        freed = 0
        for _, eid in candidates:
            if freed >= needed:
                break
            entry = self.entries[eid]
            entry.location = SWAP
            self.physical_in_use -= entry.size
            self.swap_in_use += entry.size
            stall += self.transfer_stall(entry.size)
            freed += entry.size
            victims.append(eid)
        if freed < needed:
            # roll the moves back; the caller treats this as a denial
            for eid in victims:
                entry = self.entries[eid]
                entry.location = PHYSICAL
                self.swap_in_use -= entry.size
                self.physical_in_use += entry.size
            return None
        self.peak_swap = max(self.peak_swap, self.swap_in_use)
        return victims, stall

    # -- internal --------------------------------------------------------

    def _insert(self, entry: Entry) -> int:
        eid = self._next_id
        self._next_id += 1
        self.entries[eid] = entry
        self._by_owner.setdefault(entry.owner, []).append(eid)
        if entry.location == PHYSICAL:
            self.physical_in_use += entry.size
            self.peak_physical = max(self.peak_physical, self.physical_in_use)
        else:
            self.swap_in_use += entry.size
            self.peak_swap = max(self.peak_swap, self.swap_in_use)
        return eid

    def _unindex(self, eid: int, owner) -> None:
        eids = self._by_owner.get(owner)
        if eids is not None:
            eids.remove(eid)
            if not eids:
                del self._by_owner[owner]

    def snapshot_entry(self, eid: int) -> Optional[Entry]:
        entry = self.entries.get(eid)
        return Entry(entry.owner, entry.size, entry.location) if entry else None

    def restore_entry(self, eid: int, old: Optional[Entry]) -> None:
        """Undo one recorded mutation of `eid` (used for rollback)."""
        current = self.entries.pop(eid, None)
        if current is not None:
            self._unindex(eid, current.owner)
            if current.location == PHYSICAL:
                self.physical_in_use -= current.size
            else:
                self.swap_in_use -= current.size
        if old is not None:
            self.entries[eid] = old
            self._by_owner.setdefault(old.owner, []).append(eid)
            if old.location == PHYSICAL:
                self.physical_in_use += old.size
            else:
                self.swap_in_use += old.size


@dataclass
class OversubLimits:
    """Per-resource oversubscription factors in [1.0, o_max]."""

    o_max: float = 2.0
    factors: dict[str, float] = field(default_factory=dict)

    def get(self, kind: str) -> float:
        return self.factors.get(kind, 1.0)

    def raise_for(self, kind: str, step: float) -> None:
        self.factors[kind] = min(self.o_max, self.get(kind) + step)

    def lower_for(self, kind: str, step: float, floor: float = 1.0) -> None:
        self.factors[kind] = max(max(1.0, floor), self.get(kind) - step)


def make_tables(cfg) -> dict[str, MappingTable]:
    """One mapping table per virtualized resource of an SM."""
    from .workload import RESOURCE_KINDS
    return {kind: MappingTable(kind, cfg.capacity(kind), cfg.chunk(kind),
                               cfg.swap_latency)
            for kind in RESOURCE_KINDS}
