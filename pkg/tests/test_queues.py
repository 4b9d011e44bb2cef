from __future__ import annotations

import threading
from collections import deque

import pytest
from hypothesis import given
from hypothesis import strategies as st

from broken_queues import OneNullTzQueue, RacyQueue, SpinLockQueue
from qenergy.errors import DuplicateVariantError, UnknownVariantError
from qenergy.queues import (
    MsQueue,
    NULL0,
    NULL1,
    SharedMemory,
    Stepper,
    TzQueue,
    create_queue,
    get_variant,
    register_variant,
    variants,
)
from qenergy.queues import linearize as lin
from qenergy.queues.atomic import CAS, LOAD, STORE, drive
from qenergy.queues.msqueue import HEAD as MS_HEAD
from qenergy.queues.msqueue import idx_of
from qenergy.queues.registry import unregister_variant
from qenergy.queues.tzqueue import HEADER as TZ_HEADER

ops = st.lists(st.one_of(st.integers(0, 10**6).map(lambda v: ("E", v)), st.just(("D", None))), max_size=80)


def replay(queue, script, capacity=None):
    model = deque()
    for op, value in script:
        if op == "E":
            fits = capacity is None or len(model) < capacity
            assert queue.enqueue(value) is fits
            if fits:
                model.append(value)
        else:
            assert queue.dequeue() == (model.popleft() if model else None)
        assert queue.items() == list(model)
    return model


# --- sequential behaviour ------------------------------------------------------


def test_fifo_basics():
    for queue in (MsQueue(), TzQueue(4)):
        assert queue.dequeue() is None
        for v in (1, 2, 3):
            assert queue.enqueue(v)
        assert [queue.dequeue() for _ in range(4)] == [1, 2, 3, None]


def test_tz_reports_full():
    queue = TzQueue(2)
    assert queue.enqueue(1) and queue.enqueue(2)
    assert queue.enqueue(3) is False
    assert queue.dequeue() == 1
    assert queue.enqueue(3)
    assert queue.items() == [2, 3]


@given(ops)
def test_ms_matches_deque(script):
    replay(MsQueue(initial_nodes=2, grow_by=3), script)


@given(ops, st.integers(1, 5))
def test_tz_matches_bounded_deque(script, capacity):
    replay(TzQueue(capacity), script, capacity)


@pytest.mark.parametrize("bad", [NULL0, NULL1, "x", 1.5])
def test_tz_rejects_sentinels_and_non_ints(bad):
    with pytest.raises(ValueError):
        TzQueue(2).enqueue(bad)


def test_constructor_validation():
    with pytest.raises(ValueError):
        TzQueue(0)
    with pytest.raises(ValueError):
        MsQueue(initial_nodes=0)


def test_ms_pool_grows_on_demand_and_recycles():
    queue = MsQueue(initial_nodes=1, grow_by=2)
    for v in range(9):
        queue.enqueue(v)
    assert queue.pool_size >= 10
    grown = queue.pool_size
    assert [queue.dequeue() for _ in range(9)] == list(range(9))
    for v in range(9):
        queue.enqueue(v)
    assert queue.pool_size == grown
    assert len(queue) == 9


# --- registry -------------------------------------------------------------------


def test_registry_defaults():
    assert {"a0", "a2"} <= set(variants())
    assert isinstance(create_queue("a0"), MsQueue)
    tz = create_queue("a2", capacity=8)
    assert isinstance(tz, TzQueue) and tz.capacity == 8
    assert get_variant("a2").bounded


def test_registry_duplicate_and_unknown():
    with pytest.raises(DuplicateVariantError):
        register_variant("a0", MsQueue)
    with pytest.raises(UnknownVariantError, match="reserved"):
        get_variant("a1")
    with pytest.raises(UnknownVariantError):
        create_queue("zz")


def test_registry_accepts_new_variant():
    register_variant("t9", lambda: MsQueue(4), name="test")
    try:
        assert isinstance(create_queue("t9"), MsQueue)
    finally:
        unregister_variant("t9")
    assert "t9" not in variants()


# --- step-level driving ------------------------------------------------------------


def test_stepper_matches_drive():
    a, b = TzQueue(3), TzQueue(3)
    stepper = Stepper(a.enqueue_steps(5), a.mem)
    assert stepper.finish() is drive(b.enqueue_steps(5), b.mem)
    assert a.mem.words == b.mem.words
    with pytest.raises(RuntimeError):
        stepper.step()


def test_shared_memory_primitives():
    mem = SharedMemory(2)
    assert mem.serve((CAS, 0, 0, 5)) is True
    assert mem.serve((CAS, 0, 0, 6)) is False
    mem.serve((STORE, 1, 7))
    assert mem.serve((LOAD, 1)) == 7
    snap = mem.snapshot()
    mem.store(0, 9)
    mem.restore(snap)
    assert mem.words == [5, 7]
    assert mem.extend([1, 2]) == 2


def _is_slot_cas(request):
    return request[0] == CAS and request[1] >= TZ_HEADER


def _advance(queue, positions, counter):
    """Move head and tail on by ``positions`` with fresh payloads, queue left as found."""
    for _ in range(positions):
        assert queue.enqueue(next(counter))
        assert queue.dequeue() is not None


@pytest.mark.parametrize("backlog", [0, 1, 3])
def test_tz_stale_enqueue_from_previous_lap_fails_over_many_wraps(backlog):
    capacity = 4
    queue = TzQueue(capacity)
    counter = iter(range(1000, 10**6))
    for _ in range(backlog):
        queue.enqueue(next(counter))
    for lap in range(5):
        item = 10 + lap
        stale = Stepper(queue.enqueue_steps(item), queue.mem)
        assert stale.run_until(_is_slot_cas)
        _advance(queue, capacity, counter)
        assert stale.step() is False  # prepared a lap ago, must not land
        assert stale.finish() is True
        contents = queue.items()
        assert contents[-1] == item and len(contents) == backlog + 1
        assert queue.dequeue() is not None
    assert queue.mem.words[1] >= 3 * capacity


def test_tz_stale_dequeue_from_previous_lap_fails_over_many_wraps():
    capacity = 4
    queue = TzQueue(capacity)
    counter = iter(range(1000, 10**6))
    for lap in range(5):
        queue.enqueue(next(counter))
        stale = Stepper(queue.dequeue_steps(), queue.mem)
        assert stale.run_until(_is_slot_cas)
        _advance(queue, capacity, counter)
        (oldest,) = queue.items()  # now sits in the very slot the stale CAS targets
        assert stale.step() is False
        assert stale.finish() == oldest
        assert queue.items() == []
    assert queue.mem.words[1] >= 3 * capacity


def test_tz_null_reuse_after_one_more_lap_is_a_known_limit():
    # The two-null scheme repeats every other lap: once the slot is emptied
    # again in the following lap its null matches the stale expectation.
    queue = TzQueue(4)
    counter = iter(range(1000, 10**6))
    stale = Stepper(queue.enqueue_steps(7), queue.mem)
    stale.run_until(_is_slot_cas)
    _advance(queue, 5, counter)
    assert stale.step() is True
    assert stale.finish() is True
    assert queue.items() == []  # parked one lap ahead of the tail


def test_ms_tags_stop_recycled_head():
    queue = MsQueue(initial_nodes=4)
    for v in (1, 2):
        queue.enqueue(v)
    stale = Stepper(queue.dequeue_steps(), queue.mem)
    assert stale.run_until(lambda r: r[0] == CAS and r[1] == MS_HEAD)
    seen_head = stale.request[2]
    # drain and refill until the same node index is head again
    for v in range(3, 40):
        queue.dequeue()
        queue.enqueue(v)
        if idx_of(queue.mem.words[MS_HEAD]) == idx_of(seen_head):
            break
    assert idx_of(queue.mem.words[MS_HEAD]) == idx_of(seen_head)
    assert queue.mem.words[MS_HEAD] != seen_head
    before = queue.items()
    assert stale.step() is False
    assert stale.finish() == before[0]


# --- concurrency ------------------------------------------------------------------


def run_stress(queue, producers, consumers, per_producer):
    total = producers * per_producer
    taken = []
    lock = threading.Lock()
    remaining = [total]

    def produce(p):
        for seq in range(per_producer):
            item = p * per_producer + seq
            while not queue.enqueue(item):
                pass

    def consume():
        local = []
        while True:
            with lock:
                if remaining[0] == 0:
                    break
            v = queue.dequeue()
            if v is None:
                continue
            local.append(v)
            with lock:
                remaining[0] -= 1
        taken.append(local)

    threads = [threading.Thread(target=produce, args=(p,)) for p in range(producers)]
    threads += [threading.Thread(target=consume) for _ in range(consumers)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    return taken


def check_stress(taken, producers, per_producer):
    flat = sorted(v for local in taken for v in local)
    assert flat == list(range(producers * per_producer))
    for local in taken:
        for p in range(producers):
            mine = [v for v in local if v // per_producer == p]
            assert mine == sorted(mine)


@pytest.mark.parametrize("factory", [lambda: MsQueue(64), lambda: TzQueue(16)])
def test_small_threaded_stress(factory):
    queue = factory()
    taken = run_stress(queue, 2, 2, 2000)
    check_stress(taken, 2, 2000)
    assert queue.dequeue() is None


# --- exhaustive explorer ------------------------------------------------------------


def test_programs_enumeration():
    progs = lin.programs(max_threads=2, prefills=((),))
    assert len(progs) == 6 + 21
    assert all(1 <= len(p.threads) <= 2 for p in progs)


@pytest.mark.parametrize(
    "factory,capacity",
    [(lambda: TzQueue(2), 2), (lambda: MsQueue(10), None)],
    ids=["tz", "ms"],
)
def test_explorer_two_thread_programs(factory, capacity):
    for program in lin.programs(max_threads=2):
        result = lin.explore(factory, program, capacity)
        assert result.ok, (program, result.violations[:1], result.progress_failures[:1])
        assert result.executions > 0


def test_explorer_three_threads_sample():
    program = lin.Program((("E",), ("D",), ("E", "D")), (1,))
    assert lin.explore(lambda: TzQueue(2), program, 2).ok
    assert lin.explore(lambda: MsQueue(10), program).ok


def test_explorer_catches_lost_update():
    result = lin.explore(lambda: RacyQueue(8), lin.Program((("E",), ("E",))))
    assert result.violations and not result.progress_failures


def test_explorer_catches_blocking():
    result = lin.explore(lambda: SpinLockQueue(8), lin.Program((("E",), ("E",))), solo_bound=50)
    assert result.progress_failures and not result.violations


def test_explorer_catches_single_null_tz():
    found = False
    for program in lin.programs(max_threads=2):
        if not lin.explore(lambda: OneNullTzQueue(2), program, 2).ok:
            found = True
            break
    assert found


def test_compact_visits_same_states():
    program = lin.Program((("E", "D"), ("D",)), (1,))
    exact = lin.explore(lambda: MsQueue(10), program)
    compact = lin.explore(lambda: MsQueue(10), program, compact=True)
    assert (exact.states, exact.executions) == (compact.states, compact.executions)


def test_ms_private_nodes():
    queue = MsQueue(initial_nodes=4)
    alloc = Stepper(queue.enqueue_steps(5), queue.mem)
    assert alloc.run_until(lambda r: r[0] == STORE)
    words = tuple(queue.mem.words)
    assert queue.private_request(alloc.request, words, set())
    node = (alloc.request[1] - 3) // 3
    assert not queue.private_request(alloc.request, words, {node})
    head_next = (LOAD, 3)
    assert not queue.private_request(head_next, words, set())
    assert not queue.private_request((LOAD, 0), words, set())
