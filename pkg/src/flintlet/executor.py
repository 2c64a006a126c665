"""Per-invocation task runner.

A task decodes its descriptor, builds an input iterator (object split or
shuffle queues), streams records through the stage pipeline, and either
buffers/flushes shuffle output or materializes a result. Between input
records it checks the deadline and, when the budget is nearly spent, stops
ingesting, flushes, and returns a continuation for a fresh invocation to
resume from.

Wire formats owned here (both versioned with ``"v": 1``):

* TaskDescriptor: canonical JSON; its encoded size is what counts against
  the invocation payload limit. An oversized descriptor is replaced by a
  stub ``{"v": 1, "payloadOverflowRef": {...}}`` pointing at the object
  store.
* ExecutorReport: JSON response payload; ``result`` is base64 when present.

Records are newline-delimited text in first-stage inputs and (key, value)
pairs at shuffle boundaries; keys and values cross the wire in the queue
module's canonical encoding.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field

from . import queue as mq
from .errors import MissingBatchesError, NoSuchObjectError
from .faas import ExecutionContext, RealClock
from .plan import Action
from .queue import BatchHeader, MessageBatch, QueueService
from .registry import FunctionRegistry
from .store import ObjectRange, ObjectRef, ObjectStore

DEFAULT_FLUSH_THRESHOLD = 64 * 1024 * 1024
_READ_CHUNK = 256 * 1024

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a_64(data: bytes) -> int:
    h = FNV64_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV64_PRIME) & _MASK64
    return h


def hash_partition(key_bytes: bytes, num_partitions: int) -> int:
    """Stable partition index: FNV-1a 64 of the key bytes mod partitions."""
    if num_partitions < 1:
        raise ValueError("num_partitions must be >= 1")
    return fnv1a_64(key_bytes) % num_partitions


def default_hash_partitioner(key, num_partitions: int) -> int:
    return hash_partition(mq.encode_obj(key), num_partitions)


@dataclass
class Services:
    store: ObjectStore
    queue: QueueService
    registry: FunctionRegistry


def local_context(deadline_ms: float = float("inf")) -> ExecutionContext:
    """Context for running tasks outside the faas runtime (tests, tools)."""
    return ExecutionContext(
        clock=RealClock(), deadline_ms=deadline_ms, memory_limit_bytes=1 << 62
    )


# ----------------------------------------------------------------------
# Descriptor / continuation / report


@dataclass
class Continuation:
    bytes_consumed: int
    seq_per_partition: dict[int, int] = field(default_factory=dict)
    link: int = 0

    def to_dict(self) -> dict:
        return {
            "bytesConsumed": self.bytes_consumed,
            "seqPerPartition": {str(k): v for k, v in self.seq_per_partition.items()},
            "link": self.link,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Continuation":
        return cls(
            bytes_consumed=d["bytesConsumed"],
            seq_per_partition={int(k): v for k, v in d["seqPerPartition"].items()},
            link=d["link"],
        )


@dataclass
class TaskDescriptor:
    plan_id: str
    stage_id: int
    task_id: int
    attempt: int
    pipeline: list[dict]  # [{"kind": ..., "fn": ...}, ...]
    input_spec: dict
    output_spec: dict
    continuation: Continuation | None = None
    flush_threshold_bytes: int = DEFAULT_FLUSH_THRESHOLD
    safety_margin_ms: float = 0.0
    padding: str | None = None  # test hook for exercising the overflow path

    def to_dict(self) -> dict:
        d = {
            "v": 1,
            "planId": self.plan_id,
            "stageId": self.stage_id,
            "taskId": self.task_id,
            "attempt": self.attempt,
            "pipeline": self.pipeline,
            "input": self.input_spec,
            "output": self.output_spec,
            "continuation": self.continuation.to_dict() if self.continuation else None,
            "flushThresholdBytes": self.flush_threshold_bytes,
            "safetyMarginMs": self.safety_margin_ms,
        }
        if self.padding is not None:
            d["padding"] = self.padding
        return d

    def encode(self) -> bytes:
        return mq.encode_obj(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "TaskDescriptor":
        cont = d.get("continuation")
        return cls(
            plan_id=d["planId"],
            stage_id=d["stageId"],
            task_id=d["taskId"],
            attempt=d["attempt"],
            pipeline=d["pipeline"],
            input_spec=d["input"],
            output_spec=d["output"],
            continuation=Continuation.from_dict(cont) if cont else None,
            flush_threshold_bytes=d.get("flushThresholdBytes", DEFAULT_FLUSH_THRESHOLD),
            safety_margin_ms=d.get("safetyMarginMs", 0.0),
            padding=d.get("padding"),
        )

    @classmethod
    def decode(cls, data: bytes) -> "TaskDescriptor":
        return cls.from_dict(mq.decode_obj(data))


@dataclass
class ExecutorReport:
    status: str  # done | chained
    continuation: Continuation | None = None
    messages_sent_per_partition: dict[int, int] = field(default_factory=dict)
    queue_calls: int = 0
    records_in: int = 0
    records_out: int = 0
    materialized_result: bytes | None = None
    bytes_consumed: int | None = None

    def to_bytes(self) -> bytes:
        return mq.encode_obj(
            {
                "v": 1,
                "status": self.status,
                "continuation": self.continuation.to_dict()
                if self.continuation
                else None,
                "messagesSentPerPartition": {
                    str(k): v for k, v in self.messages_sent_per_partition.items()
                },
                "queueCalls": self.queue_calls,
                "recordsIn": self.records_in,
                "recordsOut": self.records_out,
                "result": base64.b64encode(self.materialized_result).decode("ascii")
                if self.materialized_result is not None
                else None,
                "bytesConsumed": self.bytes_consumed,
            }
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "ExecutorReport":
        d = mq.decode_obj(data)
        cont = d.get("continuation")
        return cls(
            status=d["status"],
            continuation=Continuation.from_dict(cont) if cont else None,
            messages_sent_per_partition={
                int(k): v for k, v in d["messagesSentPerPartition"].items()
            },
            queue_calls=d["queueCalls"],
            records_in=d["recordsIn"],
            records_out=d["recordsOut"],
            materialized_result=base64.b64decode(d["result"])
            if d.get("result") is not None
            else None,
            bytes_consumed=d.get("bytesConsumed"),
        )


# ----------------------------------------------------------------------
# Input iterators


def read_object_split(store: ObjectStore, rng: ObjectRange, resume_at: int | None = None):
    """Yield ``(line, consumed)`` for records starting inside the split.

    A record belongs to this split iff its first byte lies in
    ``[offset, offset + length)``; the final record may extend past the
    range end and is read to completion. ``consumed`` is the split-relative
    offset of the next record start (clamped to the split length), i.e. the
    exact resume point for a chained invocation. ``resume_at`` must be such
    a previously reported value.
    """
    size = store.object_size(rng.ref)
    end = min(rng.offset + rng.length, size)
    if resume_at is not None:
        pos = rng.offset + resume_at
        skip_partial = False
    elif rng.offset == 0:
        pos = 0
        skip_partial = False
    else:
        # Read one byte early: a '\n' at offset-1 means a record starts
        # exactly at the split boundary and must not be skipped.
        pos = rng.offset - 1
        skip_partial = True

    buf = b""
    read_pos = pos
    record_start = pos
    while True:
        if not skip_partial and record_start >= end:
            return
        nl = buf.find(b"\n")
        while nl == -1 and read_pos < size:
            chunk = store.get_range(
                ObjectRange(rng.ref, read_pos, min(_READ_CHUNK, size - read_pos))
            )
            read_pos += len(chunk)
            buf += chunk
            nl = buf.find(b"\n")
        if nl == -1:
            # EOF with no newline: whatever remains is the final record.
            if buf and not skip_partial:
                yield buf.decode("utf-8"), rng.length
            return
        line = buf[:nl]
        buf = buf[nl + 1 :]
        next_start = record_start + nl + 1
        if skip_partial:
            skip_partial = False
        else:
            consumed = min(next_start - rng.offset, rng.length)
            yield line.decode("utf-8"), consumed
        record_start = next_start


def read_shuffle_input(
    queue: QueueService,
    queue_name: str,
    expected: dict[int, dict],
    receive_batch_size: int = 10,
) -> tuple[list[tuple[bytes, bytes]], int]:
    """Drain the partition queue, deduplicating by (srcTask, attempt, seq).

    ``expected`` maps srcTask -> {"attempt": a, "count": n}: the accepted
    attempt id and the number of distinct sequence numbers it sent here.
    Batches from other attempts and duplicate copies are discarded. Returns
    the unique records plus the number of receive calls made.
    """
    need = {
        int(src): spec["count"] for src, spec in expected.items() if spec["count"] > 0
    }
    accepted_attempt = {int(src): spec["attempt"] for src, spec in expected.items()}
    seen: dict[int, set[int]] = {src: set() for src in need}
    records: list[tuple[bytes, bytes]] = []
    calls = 0

    def satisfied() -> bool:
        return all(len(seen[src]) >= count for src, count in need.items())

    while not satisfied():
        batches = queue.receive(queue_name, receive_batch_size)
        calls += 1
        if not batches:
            missing = {
                src: sorted(set(range(count)) - seen[src])
                for src, count in need.items()
                if len(seen[src]) < count
            }
            raise MissingBatchesError(
                f"queue {queue_name} drained with batches missing: {missing}"
            )
        for batch in batches:
            h = batch.header
            if accepted_attempt.get(h.src_task) != h.attempt:
                continue
            if h.src_task not in seen or h.seq in seen[h.src_task]:
                continue
            seen[h.src_task].add(h.seq)
            records.extend(mq.decode_records(batch.payload))
    return records, calls


def combine_in_memory(pairs, combine_fn, on_bytes=None) -> list[tuple[object, object]]:
    """Fold values per distinct key; combine_fn must be associative and
    commutative. Output is ordered by canonical key bytes so downstream
    results are deterministic regardless of arrival order."""
    acc: dict[bytes, list] = {}
    tracked = 0
    for key, value in pairs:
        kb = mq.encode_obj(key)
        slot = acc.get(kb)
        if slot is None:
            acc[kb] = [key, value]
            tracked += len(kb) + 64
            if on_bytes is not None:
                on_bytes(tracked)
        else:
            slot[1] = combine_fn(slot[1], value)
    return [(k, v) for k, v in (acc[kb] for kb in sorted(acc))]


def should_chain(ctx: ExecutionContext, safety_margin_ms: float, state) -> bool:
    """Between-records check: stop and chain once the deadline is close.

    ``state`` is the running ChainState; a link always consumes at least one
    record before it may chain.
    """
    if state.records_this_link < 1:
        return False
    return ctx.clock.now_ms() >= ctx.deadline_ms - safety_margin_ms


@dataclass
class ChainState:
    bytes_consumed: int = 0
    seq_per_partition: dict[int, int] = field(default_factory=dict)
    link: int = 0
    records_this_link: int = 0

    def snapshot(self) -> Continuation:
        """Continuation for the next link; take it only after the final
        flush so resumed sequence counters include the flushed batches."""
        return Continuation(
            bytes_consumed=self.bytes_consumed,
            seq_per_partition=dict(self.seq_per_partition),
            link=self.link + 1,
        )


# ----------------------------------------------------------------------
# Shuffle buffering


class ShuffleBuffer:
    """Groups (key, value) byte pairs by destination partition in memory."""

    def __init__(self, num_partitions: int, flush_threshold_bytes: int):
        self.num_partitions = num_partitions
        self.flush_threshold_bytes = flush_threshold_bytes
        self._buckets: dict[int, list[tuple[bytes, bytes]]] = {}
        self.tracked_bytes = 0

    def add(self, partition: int, key: bytes, value: bytes) -> None:
        self._buckets.setdefault(partition, []).append((key, value))
        self.tracked_bytes += len(key) + len(value) + 8

    def should_flush(self) -> bool:
        return self.tracked_bytes > self.flush_threshold_bytes

    def drain(self) -> dict[int, list[tuple[bytes, bytes]]]:
        buckets = self._buckets
        self._buckets = {}
        self.tracked_bytes = 0
        return buckets


def _pack_batches(
    pairs: list[tuple[bytes, bytes]],
    make_header,
    start_seq: int,
    max_message_bytes: int,
) -> tuple[list[MessageBatch], int]:
    """Pack records into message frames no larger than the per-message cap."""
    batches = []
    seq = start_seq
    group: list[tuple[bytes, bytes]] = []
    group_payload = 4  # record-count prefix
    overhead = mq.frame_overhead(make_header(seq))

    def close_group():
        nonlocal group, group_payload, seq, overhead
        if group:
            batches.append(
                MessageBatch(header=make_header(seq), payload=mq.encode_records(group))
            )
            seq += 1
            group = []
            group_payload = 4
            overhead = mq.frame_overhead(make_header(seq))

    for key, value in pairs:
        rec_bytes = 8 + len(key) + len(value)
        if group and overhead + group_payload + rec_bytes > max_message_bytes:
            close_group()
        group.append((key, value))
        group_payload += rec_bytes
    close_group()
    return batches, seq


# ----------------------------------------------------------------------
# Task execution


def _compile_pipeline(pipeline: list[dict], registry: FunctionRegistry):
    steps = []
    for step in pipeline:
        kind = step["kind"]
        if kind not in ("map", "filter", "flatMap"):
            raise ValueError(f"non-narrow transformation in pipeline: {kind}")
        steps.append((kind, registry.function(step["fn"])))
    return steps


def _apply_pipeline(steps, record) -> list:
    out = [record]
    for kind, fn in steps:
        if kind == "map":
            out = [fn(r) for r in out]
        elif kind == "filter":
            out = [r for r in out if fn(r)]
        else:
            out = [x for r in out for x in fn(r)]
    return out


def run_task(
    desc: TaskDescriptor, services: Services, ctx: ExecutionContext | None = None
) -> ExecutorReport:
    """Execute one task; one invocation runs exactly one call of this."""
    ctx = ctx or local_context()
    steps = _compile_pipeline(desc.pipeline, services.registry)
    out_kind = desc.output_spec["kind"]

    if out_kind == "shuffleWrite":
        sink = _ShuffleSink(desc, services, ctx)
    elif out_kind == "result":
        sink = _ResultSink(desc, services)
    else:
        raise ValueError(f"unknown output spec: {out_kind}")

    state = ChainState(link=desc.continuation.link if desc.continuation else 0)
    if desc.continuation:
        state.bytes_consumed = desc.continuation.bytes_consumed
        state.seq_per_partition = dict(desc.continuation.seq_per_partition)
    sink.seq_per_partition = state.seq_per_partition

    in_kind = desc.input_spec["kind"]
    records_in = 0
    if in_kind == "objectSplit":
        spec = desc.input_spec
        rng = ObjectRange(
            ObjectRef(spec["bucket"], spec["key"]), spec["offset"], spec["length"]
        )
        resume = desc.continuation.bytes_consumed if desc.continuation else None
        can_chain = ctx.deadline_ms != float("inf")
        for line, consumed in read_object_split(services.store, rng, resume):
            records_in += 1
            for out_rec in _apply_pipeline(steps, line):
                sink.emit(out_rec)
            state.bytes_consumed = consumed
            state.records_this_link += 1
            ctx.track(sink.tracked_bytes())
            sink.maybe_flush()
            if can_chain and should_chain(ctx, desc.safety_margin_ms, state):
                sink.flush()
                ctx.mark_cooperative_stop()
                return sink.report(
                    status="chained",
                    continuation=state.snapshot(),
                    records_in=records_in,
                    bytes_consumed=state.bytes_consumed,
                )
    elif in_kind == "queuePartition":
        spec = desc.input_spec
        raw, receive_calls = read_shuffle_input(
            services.queue, spec["queue"], spec["expected"]
        )
        sink.queue_calls += receive_calls
        merge_fn_id = spec.get("mergeFn")
        pairs = [(mq.decode_obj(k), mq.decode_obj(v)) for k, v in raw]
        ctx.track(sum(len(k) + len(v) + 16 for k, v in raw))
        if merge_fn_id is not None:
            merged = combine_in_memory(
                pairs, services.registry.function(merge_fn_id), on_bytes=None
            )
        else:
            merged = sorted(pairs, key=lambda kv: (mq.encode_obj(kv[0]), mq.encode_obj(kv[1])))
        for rec in merged:
            records_in += 1
            for out_rec in _apply_pipeline(steps, rec):
                sink.emit(out_rec)
            ctx.track(sink.tracked_bytes())
            sink.maybe_flush()
    else:
        raise ValueError(f"unknown input spec: {in_kind}")

    sink.flush()
    return sink.report(
        status="done",
        continuation=None,
        records_in=records_in,
        bytes_consumed=state.bytes_consumed if in_kind == "objectSplit" else None,
    )


class _ShuffleSink:
    def __init__(self, desc: TaskDescriptor, services: Services, ctx: ExecutionContext):
        spec = desc.output_spec
        self.desc = desc
        self.services = services
        self.num_partitions = spec["numPartitions"]
        self.queue_names = spec["queues"]
        self.partitioner = services.registry.partitioner(spec["partitioner"])
        self.buffer = ShuffleBuffer(self.num_partitions, desc.flush_threshold_bytes)
        self.seq_per_partition: dict[int, int] = {}
        self.messages_per_partition: dict[int, int] = {}
        self.queue_calls = 0
        self.records_out = 0

    def emit(self, record) -> None:
        try:
            key, value = record
        except (TypeError, ValueError):
            raise ValueError(
                f"shuffle-write stages require (key, value) records, got {record!r}"
            ) from None
        part = self.partitioner(key, self.num_partitions)
        self.buffer.add(part, mq.encode_obj(key), mq.encode_obj(value))
        self.records_out += 1

    def tracked_bytes(self) -> int:
        return self.buffer.tracked_bytes

    def maybe_flush(self) -> None:
        if self.buffer.should_flush():
            self.flush()

    def flush(self) -> None:
        buckets = self.buffer.drain()
        for part in sorted(buckets):
            pairs = buckets[part]
            make_header = lambda seq, p=part: BatchHeader(
                plan_id=self.desc.plan_id,
                stage_id=self.desc.stage_id,
                src_task=self.desc.task_id,
                attempt=self.desc.attempt,
                dest_partition=p,
                seq=seq,
            )
            start_seq = self.seq_per_partition.get(part, 0)
            batches, next_seq = _pack_batches(
                pairs,
                make_header,
                start_seq,
                self.services.queue.config.max_message_bytes,
            )
            if not batches:
                continue
            self.queue_calls += self.services.queue.send_batch(
                self.queue_names[part], batches
            )
            self.seq_per_partition[part] = next_seq
            self.messages_per_partition[part] = self.messages_per_partition.get(
                part, 0
            ) + len(batches)

    def report(self, status, continuation, records_in, bytes_consumed) -> ExecutorReport:
        return ExecutorReport(
            status=status,
            continuation=continuation,
            messages_sent_per_partition=dict(self.messages_per_partition),
            queue_calls=self.queue_calls,
            records_in=records_in,
            records_out=self.records_out,
            bytes_consumed=bytes_consumed,
        )


class _ResultSink:
    def __init__(self, desc: TaskDescriptor, services: Services):
        self.desc = desc
        self.services = services
        self.action = Action(**_action_kwargs(desc.output_spec["action"]))
        self.count = 0
        self.collected: list = []
        self.lines: list[str] = []
        self.queue_calls = 0
        self.records_out = 0
        self.seq_per_partition: dict[int, int] = {}

    def emit(self, record) -> None:
        self.records_out += 1
        if self.action.kind == "count":
            self.count += 1
        elif self.action.kind == "collect":
            self.collected.append(record)
        else:
            self.lines.append(record if isinstance(record, str) else json.dumps(record))

    def tracked_bytes(self) -> int:
        return 0

    def maybe_flush(self) -> None:
        pass

    def flush(self) -> None:
        pass

    def report(self, status, continuation, records_in, bytes_consumed) -> ExecutorReport:
        if self.action.kind == "count":
            result = mq.encode_obj(self.count)
        elif self.action.kind == "collect":
            result = mq.encode_obj(self.collected)
        else:
            link = self.desc.continuation.link if self.desc.continuation else 0
            name = f"part-{self.desc.task_id:05d}"
            # Chained save tasks write one object per link; the plain name is
            # reserved for the single-link case.
            if link > 0 or status == "chained":
                name = f"{name}-{link:03d}"
            ref = ObjectRef(
                self.action.bucket, f"{self.action.prefix.rstrip('/')}/{name}"
            )
            body = "".join(line + "\n" for line in self.lines).encode("utf-8")
            self.services.store.put_object(ref, body)
            result = mq.encode_obj([ref.key])
        return ExecutorReport(
            status=status,
            continuation=continuation,
            queue_calls=self.queue_calls,
            records_in=records_in,
            records_out=self.records_out,
            materialized_result=result,
            bytes_consumed=bytes_consumed,
        )


def _action_kwargs(d: dict) -> dict:
    return {"kind": d["kind"], "bucket": d.get("bucket"), "prefix": d.get("prefix")}


def make_invocation_handler(services: Services):
    """Runtime entry point: payload -> report bytes.

    Resolves payload-overflow stubs by fetching the full descriptor from the
    object store before execution.
    """

    def handler(payload: bytes, ctx: ExecutionContext) -> bytes:
        body = mq.decode_obj(payload)
        overflow = body.get("payloadOverflowRef")
        if overflow is not None:
            ref = ObjectRef(overflow["bucket"], overflow["key"])
            if not services.store.exists(ref):
                raise NoSuchObjectError(str(ref))
            body = mq.decode_obj(services.store.get_object(ref))
        desc = TaskDescriptor.from_dict(body)
        return run_task(desc, services, ctx).to_bytes()

    return handler
