"""Exhaustive interleaving explorer with an online linearizability check.

Queue operations are generators that request one shared-memory access at a
time (see :mod:`.atomic`), so the explorer owns the memory and decides which
thread's request is served next.  It searches depth first over every
interleaving of a small program, merging states that agree on shared memory,
on every thread's generator frame and on the checker's set of possible
abstract queues.  Generators cannot be copied, so a thread is rebuilt by
feeding its own past responses back in; other threads are untouched.

Linearizability is checked just in time: each response must be explained by
some order of the operations pending at that moment, applied to a sequential
FIFO.  An operation's invocation is recorded together with its first shared
access, which narrows its window and makes the check stricter, never weaker.

Lock-freedom is approximated by solo runs: from every reachable state, each
thread with an operation in flight must finish it alone within a step bound.

Queues may offer ``private_request(request, words, foreign)`` to flag an
access no other thread can observe (for instance a store into a node that is
not yet linked).  Such a step commutes with everything the others will do, so
the search takes it immediately instead of branching.  The first access of an
operation is never taken early because it also stamps the invocation.

Queues may also offer ``canonical(words, held)`` to rename interchangeable
resources (pool nodes, say) so that states equal up to that renaming are
visited once.  ``held`` carries the plain values of each thread's locals.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .atomic import CALL, CAS, LOAD, STORE

ENQ, DEQ = "E", "D"

OP_SEQUENCES = ((ENQ,), (DEQ,), (ENQ, ENQ), (ENQ, DEQ), (DEQ, ENQ), (DEQ, DEQ))

_ATOMS = (int, str, bool, type(None), tuple, float)


@dataclass(frozen=True)
class Program:
    """Per-thread operation lists plus items enqueued before the threads start."""

    threads: tuple[tuple[str, ...], ...]
    prefill: tuple[int, ...] = ()

    def labelled(self) -> list[list[tuple[str, int | None]]]:
        """Attach a distinct payload to each enqueue."""
        counter = itertools.count(100)
        return [[(op, next(counter) if op == ENQ else None) for op in ops] for ops in self.threads]


@dataclass
class ExploreResult:
    program: Program
    states: int = 0
    executions: int = 0
    violations: list = field(default_factory=list)
    progress_failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations and not self.progress_failures


def _apply(queue: tuple, op: str, value, capacity):
    if op == ENQ:
        if capacity is not None and len(queue) >= capacity:
            return queue, False
        return queue + (value,), True
    if not queue:
        return queue, None
    return queue[1:], queue[0]


def _closure(configs, ops, capacity):
    """All configurations reachable by linearizing any pending operations."""
    seen = set(configs)
    work = deque(configs)
    while work:
        queue, status = work.popleft()
        for t, st in enumerate(status):
            if st is None or st[0] != "P":
                continue
            op, value = ops[t][st[1]]
            new_queue, result = _apply(queue, op, value, capacity)
            new_status = status[:t] + (("L", st[1], result),) + status[t + 1:]
            cfg = (new_queue, new_status)
            if cfg not in seen:
                seen.add(cfg)
                work.append(cfg)
    return seen


def _frame_key(gen):
    """Program counter and plain-valued locals of a generator and its delegates."""
    parts = []
    while gen is not None:
        frame = gen.gi_frame
        if frame is None:
            parts.append(None)
            break
        local = tuple((k, v) for k, v in frame.f_locals.items() if isinstance(v, _ATOMS))
        parts.append((gen.gi_code.co_name, frame.f_lasti, local))
        gen = gen.gi_yieldfrom
    return tuple(parts)


def _flatten(value, out: list) -> None:
    if isinstance(value, tuple):
        out.append(f"({len(value)}")
        for v in value:
            _flatten(v, out)
    else:
        out.append(value)


def _split_frame(frame):
    """Separate a frame fingerprint into its layout and a flat list of its values.

    Tuples are flattened behind a length marker string, so the flat form
    still determines the original values.
    """
    shape, values = [], []
    for part in frame:
        if part is None:
            shape.append(None)
            continue
        name, lasti, local = part
        shape.append((name, lasti, tuple(k for k, _ in local)))
        for _, v in local:
            _flatten(v, values)
    return tuple(shape), tuple(values)


def _serve(words: list, request):
    kind = request[0]
    if kind == LOAD:
        return words[request[1]]
    if kind == CAS:
        if words[request[1]] == request[2]:
            words[request[1]] = request[3]
            return True
        return False
    if kind == STORE:
        words[request[1]] = request[2]
        return None
    if kind == CALL:
        raise RuntimeError("explored queue asked for pool growth; give it a larger initial pool")
    raise ValueError(f"unknown request {request!r}")


class _Explorer:
    """Shared search machinery.

    A thread's behaviour depends only on the responses it has received, so
    each thread is a small state machine whose states are identified by
    (operation index, frame fingerprint).  Transitions ``(state, response)``
    are discovered lazily by replaying one representative history and cached,
    which makes a global step a dictionary lookup in the common case.
    """

    def __init__(self, factory, program: Program, capacity, solo_bound):
        self.queue = factory()
        for item in program.prefill:
            if not self.queue.enqueue(item):
                raise ValueError("prefill does not fit the queue")
        self.mem0 = tuple(self.queue.mem.words)
        self.ops = program.labelled()
        self.capacity = capacity
        self.solo_bound = solo_bound
        self.solo_ok: set = set()
        # local state id -> (thread, op index, representative history, pending request)
        self.local: list[tuple] = []
        self._ids: dict = {}
        self._edges: dict = {}
        self._starts: dict = {}
        self._invoked: dict = {}
        self._responded: dict = {}
        self._values: dict = {}
        self._private = getattr(self.queue, "private_request", None)
        self._canonical = getattr(self.queue, "canonical", None)
        self.canonical = self._canonical is not None
        # per local state: frame layout without values, and the values
        self.shape: list = []
        self.held: list = []

    def _open(self, t, index):
        op, value = self.ops[t][index]
        return self.queue.enqueue_steps(value) if op == ENQ else self.queue.dequeue_steps()

    def _intern(self, t, index, gen, history, request) -> int:
        frame = _frame_key(gen)
        key = (t, index, frame)
        sid = self._ids.get(key)
        if sid is None:
            sid = len(self.local)
            self._ids[key] = sid
            self.local.append((t, index, history, request))
            shape, held = _split_frame(frame)
            self.shape.append(shape)
            self.held.append(held)
        return sid

    def start(self, t, index) -> int:
        """Local state of thread ``t`` just before its first access in op ``index``."""
        sid = self._starts.get((t, index))
        if sid is None:
            gen = self._open(t, index)
            request = next(gen)
            sid = self._intern(t, index, gen, (), request)
            self._starts[(t, index)] = sid
        return sid

    def request(self, sid):
        return self.local[sid][3]

    def edge(self, sid, response):
        """``(next local state or None, result)`` after ``response``."""
        key = (sid, response)
        hit = self._edges.get(key)
        if hit is not None:
            return hit
        t, index, history, _ = self.local[sid]
        gen = self._open(t, index)
        next(gen)
        for past in history:
            gen.send(past)
        try:
            request = gen.send(response)
        except StopIteration as stop:
            hit = (None, stop.value)
        else:
            hit = (self._intern(t, index, gen, history + (response,), request), _PENDING)
        self._edges[key] = hit
        return hit

    def invoke(self, configs, t, index):
        key = (configs, t, index)
        hit = self._invoked.get(key)
        if hit is None:
            hit = frozenset((q, st[:t] + (("P", index),) + st[t + 1:]) for q, st in configs)
            self._invoked[key] = hit
        return hit

    def respond(self, configs, t, index, result):
        key = (configs, t, index, result)
        hit = self._responded.get(key)
        if hit is None:
            closed = _closure(configs, self.ops, self.capacity)
            hit = frozenset(
                (q, st[:t] + (None,) + st[t + 1:])
                for q, st in closed
                if st[t] is not None and st[t][0] == "L" and st[t][1] == index and st[t][2] == result
            )
            self._responded[key] = hit
        return hit

    def solo(self, mem: tuple, sid: int) -> bool:
        """Run one thread alone from ``mem``; memoized on (memory, local state)."""
        if (mem, sid) in self.solo_ok:
            return True
        words = list(mem)
        trail = [(mem, sid)]
        for _ in range(self.solo_bound):
            sid, result = self.edge(sid, _serve(words, self.request(sid)))
            if sid is None:
                self.solo_ok.update(trail)
                return True
            key = (tuple(words), sid)
            if key in self.solo_ok:
                self.solo_ok.update(trail)
                return True
            trail.append(key)
        return False

    def values(self, sid) -> frozenset:
        """Plain ints a thread holds in its locals or its pending request."""
        got = self._values.get(sid)
        if got is None:
            got = set()
            t, index, history, request = self.local[sid]
            gen = self._open(t, index)
            next(gen)
            for past in history:
                gen.send(past)
            stack = [request]
            for part in _frame_key(gen):
                if part is not None:
                    stack.extend(v for _, v in part[2])
            while stack:
                v = stack.pop()
                if isinstance(v, tuple):
                    stack.extend(v)
                elif isinstance(v, int):
                    got.add(v)
            got = self._values[sid] = frozenset(got)
        return got

    def eager(self, mem: tuple, threads) -> int | None:
        """A busy thread whose next access is private, if any.

        The other threads' locals, plus whatever their pending loads will
        return, are what they can reach memory through.
        """
        if self._private is None:
            return None
        for t, (_, sid) in enumerate(threads):
            if sid is None:
                continue
            foreign = set()
            for u, (_, other) in enumerate(threads):
                if u != t and other is not None:
                    foreign |= self.values(other)
                    pending = self.request(other)
                    if pending[0] == LOAD:
                        foreign.add(mem[pending[1]])
            if self._private(self.request(sid), mem, foreign):
                return t
        return None

    def state_key(self, mem: tuple, threads, configs):
        if self._canonical is None:
            return (mem, threads, configs)
        held = [() if sid is None else self.held[sid] for _, sid in threads]
        mem, held = self._canonical(mem, held)
        return (
            mem,
            tuple((index, None if sid is None else self.shape[sid], h) for (index, sid), h in zip(threads, held)),
            configs,
        )

    def final_check(self, mem: tuple, configs) -> str | None:
        contents = tuple(self.queue.items(mem))
        if not any(q == contents for q, _ in configs):
            return f"quiescent contents {contents} match no linearization {sorted(q for q, _ in configs)}"
        return None


class _Pending:
    __slots__ = ()


_PENDING = _Pending()


def explore(
    factory: Callable[[], object],
    program: Program,
    capacity: int | None = None,
    solo_bound: int | None = 200,
    max_states: int = 5_000_000,
    compact: bool = False,
) -> ExploreResult:
    """Visit every distinct state of ``program`` and check each history.

    ``factory`` builds a fresh queue whose pool (if any) is large enough that
    it never grows during the program.  ``capacity`` is the bound of the
    abstract queue (None for unbounded).  With ``solo_bound`` set, every busy
    thread of every state must also finish alone within that many steps.
    ``compact`` stores 64-bit state hashes instead of states, trading a
    vanishing chance of merging two distinct states for far less memory.
    """
    ex = _Explorer(factory, program, capacity, solo_bound)
    result = ExploreResult(program)
    k = len(ex.ops)
    lengths = tuple(len(ops) for ops in ex.ops)
    start_configs = frozenset({(tuple(program.prefill), (None,) * k)})

    # threads[t] is (next op index, local state id or None when idle)
    visited = set()
    repeats = set()
    stack = [(ex.mem0, ((0, None),) * k, start_configs, ())]
    while stack:
        mem, threads, configs, schedule = stack.pop()
        if ex.canonical:
            # cheap exact filter first; most revisits are literal repeats
            raw = hash((mem, threads, configs))
            if raw in repeats:
                continue
            repeats.add(raw)
        key = ex.state_key(mem, threads, configs)
        if compact:
            key = hash(key)
        if key in visited:
            continue
        visited.add(key)
        result.states += 1
        if result.states > max_states:
            raise RuntimeError(f"state budget {max_states} exceeded for {program}")

        enabled = [t for t in range(k) if threads[t][1] is not None or threads[t][0] < lengths[t]]
        if not enabled:
            result.executions += 1
            problem = ex.final_check(mem, configs)
            if problem:
                result.violations.append((schedule, problem))
            continue

        if solo_bound is not None:
            for t in enabled:
                sid = threads[t][1]
                if sid is not None and not ex.solo(mem, sid):
                    result.progress_failures.append((schedule, t))

        chosen = ex.eager(mem, threads)
        for t in reversed(enabled) if chosen is None else (chosen,):
            index, sid = threads[t]
            cfg = configs
            if sid is None:
                sid = ex.start(t, index)
                cfg = ex.invoke(configs, t, index)
            words = list(mem)
            nxt, outcome = ex.edge(sid, _serve(words, ex.request(sid)))
            if nxt is None:
                cfg = ex.respond(cfg, t, index, outcome)
                if not cfg:
                    op, value = ex.ops[t][index]
                    shown = "" if value is None else value
                    result.violations.append(
                        (schedule + (t,), f"thread {t} {op}({shown}) -> {outcome!r} has no linearization")
                    )
                    continue
                thread = (index + 1, None)
            else:
                thread = (index, nxt)
            stack.append((tuple(words), threads[:t] + (thread,) + threads[t + 1:], cfg, schedule + (t,)))
    return result


def programs(
    max_threads: int = 3,
    sequences: Sequence[tuple[str, ...]] = OP_SEQUENCES,
    prefills: Iterable[tuple[int, ...]] = ((), (50,)),
) -> list[Program]:
    """Every multiset of per-thread op sequences for 1..max_threads threads."""
    out = []
    prefills = list(prefills)
    for k in range(1, max_threads + 1):
        for combo in itertools.combinations_with_replacement(sequences, k):
            for pre in prefills:
                out.append(Program(tuple(combo), tuple(pre)))
    return out
