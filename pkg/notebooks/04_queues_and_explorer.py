# %% [markdown]
# # Queues, step-wise driving and the interleaving explorer

# %%
from __future__ import annotations

from qenergy.queues import MsQueue, Stepper, TzQueue
from qenergy.queues import linearize as lin
from qenergy.queues.atomic import CAS
from qenergy.queues.tzqueue import HEADER

# %% [markdown]
# A stalled enqueue on a capacity-4 ring: other threads advance the ring by a
# full lap, and the stale CAS is refused.

# %%
queue = TzQueue(4)
stale = Stepper(queue.enqueue_steps(7), queue.mem)
stale.run_until(lambda r: r[0] == CAS and r[1] >= HEADER)
for v in range(100, 104):
    queue.enqueue(v)
    queue.dequeue()
print("stale CAS accepted:", stale.step())
print("retry result:", stale.finish(), "contents:", queue.items())

# %% [markdown]
# Exhaustive check of one three-thread program against both queues.

# %%
program = lin.Program((("E",), ("D",), ("E", "D")), (1,))
for name, factory, cap in (("TZ", lambda: TzQueue(2), 2), ("MS", lambda: MsQueue(10), None)):
    result = lin.explore(factory, program, cap)
    print(f"{name}: ok={result.ok} states={result.states} executions={result.executions}")
