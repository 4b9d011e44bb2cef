"""Tsigas-Zhang style bounded lock-free array queue with two alternating null values.

Head and tail are unbounded counters; logical position ``p`` lives in slot
``p % capacity`` during lap ``p // capacity``.  A free slot holds the null of
its upcoming lap (``NULLS[lap & 1]``) and a dequeue writes the null of the
following lap, so a compare-and-swap that was prepared one lap ago finds the
wrong null and fails.

Limitations inherited from the two-null technique:

* the null pattern repeats with period two, so an enqueuer that stalls just
  before its slot CAS and resumes only after that slot has been emptied again
  in the *next* lap finds the null it expects and succeeds with a stale CAS,
  parking its item one lap ahead of the tail;
* a dequeuer compares payload values, so the same payload reappearing in the
  slot within its delay is indistinguishable (harmless with unique payloads).
"""

from __future__ import annotations

from .atomic import CAS, LOAD, RETRY, SharedMemory, drive

NULL0, NULL1 = -1, -2
NULLS = (NULL0, NULL1)
HEAD, TAIL = 0, 1
HEADER = 2


def is_null(value) -> bool:
    return value == NULL0 or value == NULL1


class TzQueue:
    """Bounded MPMC FIFO; ``enqueue`` returns False when the queue is full.

    Items must be ints other than the two reserved sentinels ``-1`` and ``-2``.
    """

    bounded = True

    def __init__(self, capacity: int = 1 << 16):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.mem = SharedMemory(HEADER + capacity, fill=NULL0)
        self.mem.words[HEAD] = 0
        self.mem.words[TAIL] = 0

    def _slot(self, position: int) -> int:
        return HEADER + position % self.capacity

    def _null_for(self, position: int) -> int:
        return NULLS[(position // self.capacity) & 1]

    def _enqueue_attempt(self, item):
        t = yield (LOAD, TAIL)
        h = yield (LOAD, HEAD)
        slot = self._slot(t)
        v = yield (LOAD, slot)
        if t != (yield (LOAD, TAIL)):
            return RETRY
        free = self._null_for(t)
        if t - h >= self.capacity:
            if v == free:
                # the oldest item was taken but head has not moved yet
                yield (CAS, HEAD, h, h + 1)
                return RETRY
            if is_null(v):
                return RETRY
            if (yield (LOAD, HEAD)) == h:
                return False
            return RETRY
        if v == free:
            if (yield (CAS, slot, free, item)):
                yield (CAS, TAIL, t, t + 1)
                return True
        elif not is_null(v):
            # another enqueuer filled this slot but has not bumped tail
            yield (CAS, TAIL, t, t + 1)
        return RETRY

    def _dequeue_attempt(self):
        h = yield (LOAD, HEAD)
        t = yield (LOAD, TAIL)
        slot = self._slot(h)
        v = yield (LOAD, slot)
        if h != (yield (LOAD, HEAD)):
            return RETRY
        if v == self._null_for(h):
            return None
        taken = self._null_for(h + self.capacity)
        if v == taken:
            # already taken, head lagging
            yield (CAS, HEAD, h, h + 1)
            return RETRY
        if h == t:
            yield (CAS, TAIL, t, t + 1)
            return RETRY
        if (yield (CAS, slot, v, taken)):
            yield (CAS, HEAD, h, h + 1)
            return v
        return RETRY

    def enqueue_steps(self, item):
        if not isinstance(item, int) or is_null(item):
            raise ValueError(f"item must be an int other than {NULL0} and {NULL1}")
        while True:
            done = yield from self._enqueue_attempt(item)
            if done is not RETRY:
                return done

    def dequeue_steps(self):
        while True:
            got = yield from self._dequeue_attempt()
            if got is not RETRY:
                return got

    def enqueue(self, item) -> bool:
        return drive(self.enqueue_steps(item), self.mem)

    def dequeue(self):
        return drive(self.dequeue_steps(), self.mem)

    def items(self, words=None) -> list:
        """Queue contents, oldest first.  Only meaningful with no operation in flight."""
        words = self.mem.words if words is None else words
        return [words[self._slot(p)] for p in range(words[HEAD], words[TAIL])]

    def __len__(self) -> int:
        return len(self.items())
