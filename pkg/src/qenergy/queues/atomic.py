"""Word-addressed shared memory with a single compare-and-swap primitive.

Python exposes no hardware CAS, so :meth:`SharedMemory.cas` makes one
compare-then-write atomic with a lock held for that single word update and
nothing else.  Algorithms never hold a lock across two accesses, so they keep
the lock-free structure of their hardware counterparts: a thread suspended
between accesses cannot block the others.

Queue algorithms are written as generators that *request* memory accesses
(``LOAD``, ``STORE``, ``CAS``) and receive the results; :func:`drive` serves
the requests against a :class:`SharedMemory`.  Keeping the algorithms free of
direct memory access is what lets the interleaving explorer replay and
reorder them one access at a time.
"""

from __future__ import annotations

import threading
from typing import Iterable

LOAD, STORE, CAS, CALL = 0, 1, 2, 3


class _Retry:
    __slots__ = ()

    def __repr__(self):
        return "RETRY"


# Returned by one attempt of a retry loop.  Deliberately not a plain value, so
# the explorer's frame fingerprint ignores it.
RETRY = _Retry()


class SharedMemory:
    __slots__ = ("words", "_lock")

    def __init__(self, size: int = 0, fill: int = 0):
        self.words = [fill] * size
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self.words)

    def load(self, addr: int):
        return self.words[addr]

    def store(self, addr: int, value) -> None:
        self.words[addr] = value

    def cas(self, addr: int, expected, new) -> bool:
        with self._lock:
            if self.words[addr] == expected:
                self.words[addr] = new
                return True
            return False

    def extend(self, values: Iterable) -> int:
        """Append words and return the address of the first new one."""
        with self._lock:
            base = len(self.words)
            self.words.extend(values)
            return base

    def snapshot(self) -> tuple:
        return tuple(self.words)

    def restore(self, snap: tuple) -> None:
        self.words[:] = snap

    def serve(self, request):
        """Carry out one access request and return its result."""
        kind = request[0]
        if kind == LOAD:
            return self.words[request[1]]
        if kind == CAS:
            return self.cas(request[1], request[2], request[3])
        if kind == STORE:
            self.words[request[1]] = request[2]
            return None
        if kind == CALL:
            return request[1](*request[2:])
        raise ValueError(f"unknown request {request!r}")


def drive(steps, mem: SharedMemory):
    """Run an algorithm generator against ``mem`` and return its result."""
    serve = mem.serve
    try:
        request = next(steps)
        while True:
            request = steps.send(serve(request))
    except StopIteration as stop:
        return stop.value


class Stepper:
    """Drive an algorithm generator one access at a time.

    ``request`` is the access the operation will perform next; ``step``
    performs it and returns what the memory answered.  Useful for pausing an
    operation at a chosen point while other threads move the queue on.
    """

    def __init__(self, steps, mem: SharedMemory):
        self.steps = steps
        self.mem = mem
        self.done = False
        self.result = None
        self.request = None
        try:
            self.request = next(steps)
        except StopIteration as stop:
            self.done, self.result = True, stop.value

    def step(self):
        if self.done:
            raise RuntimeError("operation already finished")
        answer = self.mem.serve(self.request)
        try:
            self.request = self.steps.send(answer)
        except StopIteration as stop:
            self.done, self.result, self.request = True, stop.value, None
        return answer

    def run_until(self, predicate, limit: int = 10_000) -> bool:
        """Step until ``predicate(request)`` holds; False if the op finished first."""
        for _ in range(limit):
            if self.done:
                return False
            if predicate(self.request):
                return True
            self.step()
        raise RuntimeError("step limit reached")

    def finish(self, limit: int = 10_000):
        for _ in range(limit):
            if self.done:
                return self.result
            self.step()
        raise RuntimeError("step limit reached")
