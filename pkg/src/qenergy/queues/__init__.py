"""Lock-free FIFO queues exercised by the benchmark harness."""

from .atomic import SharedMemory, Stepper, drive
from .msqueue import MsQueue
from .registry import QueueVariant, create_queue, get_variant, register_variant, variants
from .tzqueue import NULL0, NULL1, TzQueue

__all__ = [
    "MsQueue",
    "NULL0",
    "NULL1",
    "QueueVariant",
    "SharedMemory",
    "Stepper",
    "TzQueue",
    "create_queue",
    "drive",
    "get_variant",
    "register_variant",
    "variants",
]
