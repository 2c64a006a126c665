"""Single-process oracle: runs a lineage in-process with plain Python.

Deliberately independent of the executor/queue/scheduler machinery; it
shares only the lineage definition and function registry, so it serves as
the correctness reference for the distributed path.
"""

from __future__ import annotations

from itertools import chain

from ..plan import Lineage
from ..registry import FunctionRegistry
from ..store import ObjectRange, ObjectRef, ObjectStore


def _read_all_lines(store: ObjectStore, bucket: str, prefix: str) -> list[str]:
    lines: list[str] = []
    for key, size in store.list_prefix(bucket, prefix):
        data = store.get_range(ObjectRange(ObjectRef(bucket, key), 0, size))
        text = data.decode("utf-8")
        if not text:
            continue
        parts = text.split("\n")
        if parts and parts[-1] == "":
            parts.pop()
        lines.extend(parts)
    return lines


def run_local(lineage: Lineage, store: ObjectStore, registry: FunctionRegistry):
    records: list = _read_all_lines(
        store, lineage.source_bucket, lineage.source_prefix
    )
    for t in lineage.transformations:
        if t.kind == "map":
            fn = registry.function(t.fn_id)
            records = [fn(r) for r in records]
        elif t.kind == "filter":
            fn = registry.function(t.fn_id)
            records = [r for r in records if fn(r)]
        elif t.kind == "flatMap":
            fn = registry.function(t.fn_id)
            records = list(chain.from_iterable(fn(r) for r in records))
        elif t.kind == "reduceByKey":
            fn = registry.function(t.fn_id)
            acc: dict = {}
            for key, value in records:
                acc[key] = fn(acc[key], value) if key in acc else value
            records = sorted(acc.items(), key=lambda kv: str(kv[0]))
        elif t.kind == "partitionBy":
            pass  # redistribution only; the record multiset is unchanged
        else:
            raise ValueError(f"unknown transformation {t.kind}")

    action = lineage.action
    if action.kind == "count":
        return len(records)
    if action.kind == "collect":
        return records
    body = "".join(
        (r if isinstance(r, str) else repr(r)) + "\n" for r in records
    ).encode("utf-8")
    key = f"{action.prefix.rstrip('/')}/part-local-00000"
    store.put_object(ObjectRef(action.bucket, key), body)
    return {"bucket": action.bucket, "prefix": action.prefix, "keys": [key]}
