"""Michael-Scott lock-free linked queue over a pool of tagged node indices.

Links are single words packing a node index with a generation tag, so the
classic ABA guard needs only a word-sized CAS.  Freed nodes go back to a
Treiber free list (itself tag-protected) and are reused; when the free list
runs dry the pool grows by a chunk, which plays the part of ``malloc`` and is
the only place a lock is taken.

Every shared-memory access is a request yielded to the caller, which lets the
exhaustive explorer interleave threads at access granularity.  The public
:meth:`MsQueue.enqueue` / :meth:`MsQueue.dequeue` simply run those steps.
"""

from __future__ import annotations

import threading

from .atomic import CALL, CAS, LOAD, RETRY, STORE, SharedMemory, drive

NULL = 0xFFFFFFFF
TAG_MASK = 0xFFFFFFFF

HEAD, TAIL, FREE = 0, 1, 2
HEADER = 3
NODE_WORDS = 3  # next, value, free-list link


def pack(idx: int, tag: int) -> int:
    return ((tag & TAG_MASK) << 32) | idx


def idx_of(word: int) -> int:
    return word & 0xFFFFFFFF


def tag_of(word: int) -> int:
    return word >> 32


def _next(node: int) -> int:
    return HEADER + NODE_WORDS * node


def _value(node: int) -> int:
    return HEADER + NODE_WORDS * node + 1


def _link(node: int) -> int:
    return HEADER + NODE_WORDS * node + 2


class MsQueue:
    """Unbounded MPMC FIFO; ``enqueue`` always succeeds."""

    bounded = False

    def __init__(self, initial_nodes: int = 1024, grow_by: int = 1024):
        if initial_nodes < 1 or grow_by < 1:
            raise ValueError("node pool sizes must be >= 1")
        self.grow_by = grow_by
        self._grow_lock = threading.Lock()
        mem = SharedMemory(HEADER + NODE_WORDS * initial_nodes)
        mem.words[_next(0)] = pack(NULL, 0)
        mem.words[HEAD] = pack(0, 0)
        mem.words[TAIL] = pack(0, 0)
        for node in range(1, initial_nodes):
            mem.words[_next(node)] = pack(NULL, 0)
            mem.words[_link(node)] = node + 1 if node + 1 < initial_nodes else NULL
        mem.words[FREE] = pack(1 if initial_nodes > 1 else NULL, 0)
        self.mem = mem

    @property
    def pool_size(self) -> int:
        return (len(self.mem) - HEADER) // NODE_WORDS

    # --- node pool ---------------------------------------------------------

    def _grow(self, seen_top: int) -> None:
        with self._grow_lock:
            if self.mem.load(FREE) != seen_top:
                return  # someone else refilled or changed the list meanwhile
            first = self.pool_size
            words = []
            for node in range(first, first + self.grow_by):
                words += [pack(NULL, 0), 0, NULL]
            self.mem.extend(words)
            for node in range(first, first + self.grow_by):
                drive(self._free_steps(node), self.mem)

    def _alloc_attempt(self):
        top = yield (LOAD, FREE)
        node = idx_of(top)
        if node == NULL:
            yield (CALL, self._grow, top)
            return RETRY
        following = yield (LOAD, _link(node))
        if (yield (CAS, FREE, top, pack(following, tag_of(top) + 1))):
            # the link is dead from here on; clearing it keeps states that
            # differ only in which thread got which node identical
            yield (STORE, _link(node), NULL)
            return node
        return RETRY

    def _alloc_steps(self):
        while True:
            node = yield from self._alloc_attempt()
            if node is not RETRY:
                return node

    def _free_attempt(self, node: int):
        top = yield (LOAD, FREE)
        yield (STORE, _link(node), idx_of(top))
        if (yield (CAS, FREE, top, pack(node, tag_of(top) + 1))):
            return True
        return RETRY

    def _free_steps(self, node: int):
        while (yield from self._free_attempt(node)) is RETRY:
            pass

    # --- queue operations -------------------------------------------------------

    def _link_attempt(self, node: int):
        tail = yield (LOAD, TAIL)
        nxt = yield (LOAD, _next(idx_of(tail)))
        if tail != (yield (LOAD, TAIL)):
            return RETRY
        if idx_of(nxt) == NULL:
            if (yield (CAS, _next(idx_of(tail)), nxt, pack(node, tag_of(nxt) + 1))):
                return tail
        else:
            # tail is lagging; help it along
            yield (CAS, TAIL, tail, pack(idx_of(nxt), tag_of(tail) + 1))
        return RETRY

    def enqueue_steps(self, item):
        node = yield from self._alloc_steps()
        yield (STORE, _value(node), item)
        old = yield (LOAD, _next(node))
        yield (STORE, _next(node), pack(NULL, tag_of(old) + 1))
        while True:
            tail = yield from self._link_attempt(node)
            if tail is not RETRY:
                break
        yield (CAS, TAIL, tail, pack(node, tag_of(tail) + 1))
        return True

    def _dequeue_attempt(self):
        head = yield (LOAD, HEAD)
        tail = yield (LOAD, TAIL)
        nxt = yield (LOAD, _next(idx_of(head)))
        if head != (yield (LOAD, HEAD)):
            return RETRY
        if idx_of(head) == idx_of(tail):
            if idx_of(nxt) == NULL:
                return None
            yield (CAS, TAIL, tail, pack(idx_of(nxt), tag_of(tail) + 1))
            return RETRY
        if idx_of(nxt) == NULL:
            return RETRY
        value = yield (LOAD, _value(idx_of(nxt)))
        if (yield (CAS, HEAD, head, pack(idx_of(nxt), tag_of(head) + 1))):
            return head, value
        return RETRY

    def dequeue_steps(self):
        while True:
            got = yield from self._dequeue_attempt()
            if got is None:
                return None
            if got is not RETRY:
                break
        head, value = got
        yield from self._free_steps(idx_of(head))
        return value

    def enqueue(self, item) -> bool:
        return drive(self.enqueue_steps(item), self.mem)

    def dequeue(self):
        return drive(self.dequeue_steps(), self.mem)

    # --- explorer support ---------------------------------------------------

    def private_request(self, request, words, foreign) -> bool:
        """True if the node ``request`` touches is out of every other thread's reach.

        ``foreign`` holds the plain values other threads keep in their
        locals or are about to load.  Reach is closed over the shared roots
        and those values: next links are followed from every node found,
        free-list links only along the free list, since an allocator reads a
        node's link right after finding the node through ``FREE``.  A False
        answer is always safe.
        """
        if request[0] == CALL or request[1] < HEADER:
            return False
        target = (request[1] - HEADER) // NODE_WORDS
        n_nodes = (len(words) - HEADER) // NODE_WORDS
        work = [(idx_of(words[HEAD]), False), (idx_of(words[TAIL]), False), (idx_of(words[FREE]), True)]
        work += [(idx_of(v), False) for v in foreign]
        seen = set()
        while work:
            node, links = work.pop()
            if node == target:
                return False
            if (node, links) in seen or not 0 <= node < n_nodes:
                continue
            seen.add((node, links))
            work.append((idx_of(words[_next(node)]), False))
            if links:
                work.append((words[_link(node)], True))
        return True

    def canonical(self, words: tuple, held: list) -> tuple:
        """Rename nodes in discovery order so isomorphic states compare equal.

        Nodes are numbered as a walk finds them from ``HEAD``, ``TAIL`` and
        ``FREE``, then from each thread's ``held`` values in order, following
        next and free-list links.  The algorithm only compares and
        dereferences node indices, so renaming them is a symmetry.  Payloads
        must not look like node indices, or they would be renamed too.
        Returns the renamed words and held values.
        """
        low = 0xFFFFFFFF
        n_nodes = (len(words) - HEADER) // NODE_WORDS
        order: dict[int, int] = {}
        seq: list[int] = []
        pos = 0
        groups = [(words[HEAD], words[TAIL], words[FREE])]
        groups += [[v for v in values if type(v) is int] for values in held]
        for group in groups:
            for v in group:
                node = v & low
                if node < n_nodes and node not in order:
                    order[node] = len(seq)
                    seq.append(node)
            while pos < len(seq):
                base = HEADER + NODE_WORDS * seq[pos]
                pos += 1
                for node in (words[base] & low, words[base + 2]):
                    if node < n_nodes and node not in order:
                        order[node] = len(seq)
                        seq.append(node)
        for node in range(n_nodes):
            if node not in order:
                order[node] = len(seq)
                seq.append(node)

        out = [0] * len(words)
        for addr in (HEAD, TAIL, FREE):
            w = words[addr]
            node = w & low
            out[addr] = w if node >= n_nodes else w - node + order[node]
        for node, new in order.items():
            src = HEADER + NODE_WORDS * node
            dst = HEADER + NODE_WORDS * new
            w = words[src]
            k = w & low
            out[dst] = w if k >= n_nodes else w - k + order[k]
            out[dst + 1] = words[src + 1]
            link = words[src + 2]
            out[dst + 2] = link if link >= n_nodes else order[link]
        renamed = []
        for values in held:
            row = []
            for v in values:
                if type(v) is int:
                    k = v & low
                    if k < n_nodes:
                        v = v - k + order[k]
                row.append(v)
            renamed.append(tuple(row))
        return tuple(out), renamed

    # --- quiescent inspection ---------------------------------------------------

    def items(self, words=None) -> list:
        """Queue contents, oldest first.  Only meaningful with no operation in flight."""
        words = self.mem.words if words is None else words
        out, node, seen = [], idx_of(words[HEAD]), set()
        while True:
            if node in seen:
                raise RuntimeError("cycle in queue links")
            seen.add(node)
            nxt = idx_of(words[_next(node)])
            if nxt == NULL:
                return out
            out.append(words[_value(nxt)])
            node = nxt

    def __len__(self) -> int:
        return len(self.items())
