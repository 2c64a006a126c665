"""Function registry: opaque ids resolving to per-record callables.

Task descriptors carry function references by id instead of serialized
code; the registry is the in-process stand-in for a deployed code package.
Combiners are ordinary binary functions and must be associative and
commutative. Partitioners map ``(key, num_partitions) -> index`` and must
be deterministic across processes.
"""

from __future__ import annotations

import operator
from typing import Callable

from .errors import UnknownFunctionError


class FunctionRegistry:
    def __init__(self):
        self._functions: dict[str, Callable] = {}
        self._partitioners: dict[str, Callable] = {}

    def register(self, fn_id: str, fn: Callable) -> None:
        self._functions[fn_id] = fn

    def register_partitioner(self, pid: str, fn: Callable) -> None:
        self._partitioners[pid] = fn

    def function(self, fn_id: str) -> Callable:
        try:
            return self._functions[fn_id]
        except KeyError:
            raise UnknownFunctionError(f"function id {fn_id!r}") from None

    def partitioner(self, pid: str) -> Callable:
        try:
            return self._partitioners[pid]
        except KeyError:
            raise UnknownFunctionError(f"partitioner id {pid!r}") from None

    def has_function(self, fn_id: str) -> bool:
        return fn_id in self._functions

    def has_partitioner(self, pid: str) -> bool:
        return pid in self._partitioners


def default_registry() -> FunctionRegistry:
    """Registry with the built-ins every plan can rely on."""
    from .executor import default_hash_partitioner

    reg = FunctionRegistry()
    reg.register("add", operator.add)
    reg.register_partitioner("hash", default_hash_partitioner)
    return reg
