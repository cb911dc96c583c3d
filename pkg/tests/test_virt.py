import math
import random

import pytest

from smvirt.virt import PHYSICAL, SWAP, MappingTable, OversubLimits


def smem_table(capacity=8192):
    return MappingTable("scratchpad", capacity, chunk=128, swap_latency=400)


def reg_table(capacity=1024):
    return MappingTable("registers", capacity, chunk=64, swap_latency=400)


def test_acquire_fits_physical():
    t = smem_table()
    out = t.acquire(4224, owner="w0")
    assert out.placed == PHYSICAL and out.stall_cycles == 0
    assert t.physical_in_use == 4224


def test_acquire_overflows_to_swap_with_chunked_stall():
    t = smem_table()
    t.acquire(8192, owner="w0")  # physical now full
    out = t.acquire(1024, owner="w1", factor=1.5)
    assert out.placed == SWAP
    assert out.stall_cycles == math.ceil(1024 / 128) * 400 == 3200


def test_acquire_denied_without_oversubscription():
    t = smem_table()
    t.acquire(8192, owner="w0")
    out = t.acquire(1, owner="w1", factor=1.0)
    assert not out.ok
    assert out.reason == "virtual-space-exhausted"


def test_acquire_zero_size_is_physical():
    t = smem_table()
    t.acquire(8192, owner="w0")
    out = t.acquire(0, owner="w1", factor=1.0)
    assert out.placed == PHYSICAL
    assert t.entries[out.entry_id].size == 0


def test_acquire_negative_size_is_contract_violation():
    with pytest.raises(ValueError):
        smem_table().acquire(-1, owner="w0")


def test_release_decrements_matching_counter():
    t = smem_table()
    phys = t.acquire(4224, owner="w0")
    t.acquire(8192 - 4224, owner="w1")
    swapped = t.acquire(512, owner="w2", factor=2.0)
    assert t.release(phys.entry_id) == 4224
    assert t.physical_in_use == 8192 - 4224
    assert t.release(swapped.entry_id) == 512
    assert t.swap_in_use == 0


def test_double_release_raises():
    t = smem_table()
    out = t.acquire(64, owner="w0")
    t.release(out.entry_id)
    with pytest.raises(KeyError):
        t.release(out.entry_id)


def test_swap_in_relocates_and_charges_chunks():
    t = reg_table(capacity=1024)
    full = t.acquire(1024, owner="w0")
    moved = t.acquire(256, owner="w1", factor=2.0)
    assert moved.placed == SWAP
    t.release(full.entry_id)
    stall = t.swap_in(moved.entry_id)
    assert stall == math.ceil(256 / 64) * 400 == 1600
    entry = t.entries[moved.entry_id]
    assert entry.location == PHYSICAL
    assert (entry.size, entry.owner) == (256, "w1")


def test_swap_in_zero_size_entry_is_free():
    t = reg_table(capacity=64)
    t.acquire(64, owner="w0")
    z = t.acquire(0, owner="w1", factor=1.0)
    t.entries[z.entry_id].location = SWAP  # force a degenerate swap entry
    assert t.swap_in(z.entry_id) == 0


def test_swap_in_requires_physical_room():
    t = reg_table(capacity=64)
    t.acquire(64, owner="w0")
    moved = t.acquire(64, owner="w1", factor=2.0)
    with pytest.raises(ValueError, match="evict first"):
        t.swap_in(moved.entry_id)


def test_evict_prefers_barrier_waiters_and_moves_whole_entries():
    t = smem_table(capacity=4096)
    at_barrier = t.acquire(2048, owner="sleeper")
    running = t.acquire(2048, owner="runner")
    classify = {"sleeper": 0, "runner": None}.get
    result = t.evict(1024, classify)
    assert result is not None
    victims, stall = result
    assert victims == [at_barrier.entry_id]
    assert t.entries[at_barrier.entry_id].location == SWAP
    assert t.entries[running.entry_id].location == PHYSICAL
    assert stall == math.ceil(2048 / 128) * 400


def test_evict_nothing_needed():
    t = smem_table()
    t.acquire(128, owner="w0")
    assert t.evict(0, lambda owner: 0) == ([], 0)


def test_evict_denied_when_all_pinned():
    t = smem_table(capacity=4096)
    t.acquire(4096, owner="runner")
    assert t.evict(64, lambda owner: None) is None
    assert t.entries and t.physical_in_use == 4096  # rolled back


def test_evict_class_then_age_ordering():
    t = reg_table(capacity=192)
    first_idle = t.acquire(64, owner="idle-a")
    barrier = t.acquire(64, owner="barrier")
    second_idle = t.acquire(64, owner="idle-b")
    classify = {"barrier": 0, "idle-a": 1, "idle-b": 1}.get
    victims, _ = t.evict(100, classify)
    assert victims == [barrier.entry_id, first_idle.entry_id]
    assert t.entries[second_idle.entry_id].location == PHYSICAL


def _random_trace(kind, seed, steps=120):
    rng = random.Random(seed)
    chunk = {"registers": 64, "scratchpad": 128, "thread_slots": 8}[kind]
    cap = rng.choice([1024, 4096, 8192])
    t = MappingTable(kind, cap, chunk, swap_latency=400)
    factor = rng.choice([1.0, 1.25, 1.5, 2.0])
    live = []
    status = {}
    for _ in range(steps):
        op = rng.random()
        if op < 0.45 or not live:
            owner = f"o{rng.randrange(8)}"
            status.setdefault(owner, rng.choice([0, 1, None]))
            out = t.acquire(rng.randrange(0, cap // 2), owner, factor)
            if out.ok:
                live.append(out.entry_id)
        elif op < 0.70:
            eid = live.pop(rng.randrange(len(live)))
            t.release(eid)
        elif op < 0.85:
            swapped = [e for e in live if t.entries[e].location == SWAP
                       and t.entries[e].size <= t.physical_free]
            if swapped:
                t.swap_in(rng.choice(swapped))
        elif factor > 1.0:  # eviction only ever happens under oversubscription
            t.evict(rng.randrange(0, cap // 2), status.get)
        t.check_conservation()
        assert t.total_in_use() <= factor * cap + 1e-9
        if factor == 1.0:
            assert t.swap_in_use == 0
    return t


@pytest.mark.parametrize("kind", ["registers", "scratchpad", "thread_slots"])
def test_conservation_random_traces(kind):
    for seed in range(60):
        _random_trace(kind, seed)


def test_acquire_release_roundtrip_restores_counters():
    t = smem_table()
    t.acquire(1000, owner="w0")
    before = (t.physical_in_use, t.swap_in_use)
    out = t.acquire(500, owner="w1", factor=2.0)
    t.release(out.entry_id)
    assert (t.physical_in_use, t.swap_in_use) == before


def test_swap_in_preserves_total_allocation():
    t = reg_table(capacity=128)
    t.acquire(128, owner="w0")
    moved = t.acquire(64, owner="w1", factor=2.0)
    total = t.total_in_use()
    t.release(t.owner_entries("w0")[0])
    t.swap_in(moved.entry_id)
    assert t.total_in_use() == total - 128


def test_oversub_limits_clamping():
    limits = OversubLimits(o_max=2.0)
    limits.raise_for("registers", 0.125)
    assert limits.get("registers") == 1.125
    for _ in range(20):
        limits.raise_for("registers", 0.5)
    assert limits.get("registers") == 2.0
    for _ in range(20):
        limits.lower_for("registers", 0.5)
    assert limits.get("registers") == 1.0
    limits.lower_for("scratchpad", 0.125, floor=1.25)
    assert limits.get("scratchpad") == 1.25
