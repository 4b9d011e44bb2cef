"""Registry of queue variants selectable by id (``a0``, ``a2``, ...)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from ..errors import DuplicateVariantError, UnknownVariantError
from .msqueue import MsQueue
from .tzqueue import TzQueue

# ids kept free for algorithms that are named but not implemented here
RESERVED = {
    "a1": "Valois",
    "a3": "Gidenstam",
    "a5": "Hoffman",
    "a6": "Moir",
}


@dataclass(frozen=True)
class QueueVariant:
    id: str
    name: str
    constructor: Callable[..., object]
    bounded: bool = False
    default_capacity: int | None = None

    def create(self, capacity: int | None = None):
        if self.bounded:
            return self.constructor(capacity or self.default_capacity)
        return self.constructor()


_REGISTRY: dict[str, QueueVariant] = {}


def register_variant(
    id: str,
    constructor: Callable[..., object],
    name: str | None = None,
    bounded: bool = False,
    default_capacity: int | None = None,
) -> QueueVariant:
    if id in _REGISTRY:
        raise DuplicateVariantError(f"queue variant {id!r} is already registered")
    variant = QueueVariant(id, name or id, constructor, bounded, default_capacity)
    _REGISTRY[id] = variant
    return variant


def unregister_variant(id: str) -> None:
    _REGISTRY.pop(id, None)


def get_variant(id: str) -> QueueVariant:
    try:
        return _REGISTRY[id]
    except KeyError:
        if id in RESERVED:
            raise UnknownVariantError(f"queue variant {id!r} ({RESERVED[id]}) is reserved but not implemented") from None
        raise UnknownVariantError(f"unknown queue variant {id!r}; known: {sorted(_REGISTRY)}") from None


def variants() -> list[str]:
    return sorted(_REGISTRY)


def create_queue(id: str, capacity: int | None = None):
    return get_variant(id).create(capacity)


register_variant("a0", MsQueue, name="Michael-Scott")
register_variant("a2", TzQueue, name="Tsigas-Zhang", bounded=True, default_capacity=1 << 16)
