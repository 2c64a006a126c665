"""Simulated message-queue service: the shuffle transport.

Delivery is at-least-once: every sent batch is receivable one or more
times. Duplicate injection happens at enqueue time with a seeded RNG, so a
given (seed, send sequence) produces the same duplicates on every run. No
ordering guarantee is made by ``receive``.

Wire formats (versioned, bit-exact, all little-endian):

* record block: ``u32 count``, then per record ``u32 keyLen, keyBytes,
  u32 valLen, valBytes``. Keys and values are canonical JSON (sorted keys,
  no whitespace) encoded as UTF-8.
* message frame: ``u32 headerLen, headerJson, u32 payloadLen, payload``.
  The frame size is what counts against ``max_message_bytes``.
"""

from __future__ import annotations

import json
import math
import random
import struct
import threading
from collections import deque
from dataclasses import dataclass

from .errors import MessageTooLargeError, NoSuchQueueError, QueueExistsError

_U32 = struct.Struct("<I")


def encode_obj(obj) -> bytes:
    """Canonical JSON bytes; the stable form used for keys and values."""
    return json.dumps(obj, separators=(",", ":"), sort_keys=True).encode("utf-8")


def decode_obj(data: bytes):
    return json.loads(data.decode("utf-8"))


def encode_records(pairs: list[tuple[bytes, bytes]]) -> bytes:
    parts = [_U32.pack(len(pairs))]
    for key, val in pairs:
        parts.append(_U32.pack(len(key)))
        parts.append(key)
        parts.append(_U32.pack(len(val)))
        parts.append(val)
    return b"".join(parts)


def decode_records(block: bytes) -> list[tuple[bytes, bytes]]:
    (count,) = _U32.unpack_from(block, 0)
    pos = 4
    out = []
    for _ in range(count):
        (klen,) = _U32.unpack_from(block, pos)
        pos += 4
        key = block[pos : pos + klen]
        pos += klen
        (vlen,) = _U32.unpack_from(block, pos)
        pos += 4
        val = block[pos : pos + vlen]
        pos += vlen
        out.append((key, val))
    if pos != len(block):
        raise ValueError("trailing bytes in record block")
    return out


@dataclass(frozen=True)
class BatchHeader:
    """Identity of a logical shuffle batch within a plan run.

    ``attempt`` gives each task re-execution a fresh sequence namespace so
    deduplication stays sound under retries.
    """

    plan_id: str
    stage_id: int
    src_task: int
    attempt: int
    dest_partition: int
    seq: int

    def to_dict(self) -> dict:
        return {
            "planId": self.plan_id,
            "stageId": self.stage_id,
            "srcTask": self.src_task,
            "attempt": self.attempt,
            "destPartition": self.dest_partition,
            "seq": self.seq,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BatchHeader":
        return cls(
            plan_id=d["planId"],
            stage_id=d["stageId"],
            src_task=d["srcTask"],
            attempt=d["attempt"],
            dest_partition=d["destPartition"],
            seq=d["seq"],
        )


@dataclass(frozen=True)
class MessageBatch:
    header: BatchHeader
    payload: bytes

    def encode(self) -> bytes:
        hdr = encode_obj(self.header.to_dict())
        return (
            _U32.pack(len(hdr)) + hdr + _U32.pack(len(self.payload)) + self.payload
        )

    @classmethod
    def decode(cls, frame: bytes) -> "MessageBatch":
        (hlen,) = _U32.unpack_from(frame, 0)
        hdr = BatchHeader.from_dict(decode_obj(frame[4 : 4 + hlen]))
        (plen,) = _U32.unpack_from(frame, 4 + hlen)
        payload = frame[8 + hlen : 8 + hlen + plen]
        return cls(header=hdr, payload=payload)

    def encoded_size(self) -> int:
        return 8 + len(encode_obj(self.header.to_dict())) + len(self.payload)


def frame_overhead(header: BatchHeader) -> int:
    """Bytes a message frame adds on top of its payload, for this header."""
    return 8 + len(encode_obj(header.to_dict()))


@dataclass
class QueueConfig:
    # Defaults mirror real SQS limits (256 KiB/message, 10 entries/send);
    # they are configuration, not constants.
    max_message_bytes: int = 262_144
    max_batch_entries: int = 10
    duplicate_probability: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.duplicate_probability <= 1.0):
            raise ValueError("duplicate_probability must be in [0, 1]")
        if self.max_message_bytes < 1 or self.max_batch_entries < 1:
            raise ValueError("size caps must be >= 1")


class QueueService:
    """Thread-safe queue service handle; one instance per simulated account."""

    def __init__(self, config: QueueConfig | None = None):
        self.config = config or QueueConfig()
        self._queues: dict[str, deque[MessageBatch]] = {}
        self._rng = random.Random(self.config.rng_seed)
        self._lock = threading.Lock()

    def create_queue(self, name: str) -> None:
        with self._lock:
            if name in self._queues:
                raise QueueExistsError(name)
            self._queues[name] = deque()

    def delete_queue(self, name: str) -> None:
        with self._lock:
            if name not in self._queues:
                raise NoSuchQueueError(name)
            del self._queues[name]

    def queue_names(self) -> list[str]:
        with self._lock:
            return sorted(self._queues)

    def send_batch(self, name: str, batches: list[MessageBatch]) -> int:
        """Enqueue batches; returns the number of service calls consumed."""
        for batch in batches:
            size = batch.encoded_size()
            if size > self.config.max_message_bytes:
                raise MessageTooLargeError(
                    f"message of {size} bytes exceeds cap "
                    f"{self.config.max_message_bytes}",
                    header=batch.header,
                )
        with self._lock:
            if name not in self._queues:
                raise NoSuchQueueError(name)
            q = self._queues[name]
            for batch in batches:
                q.append(batch)
                if (
                    self.config.duplicate_probability > 0
                    and self._rng.random() < self.config.duplicate_probability
                ):
                    q.append(batch)
        return math.ceil(len(batches) / self.config.max_batch_entries)

    def receive(self, name: str, max_batches: int) -> list[MessageBatch]:
        """Remove and return up to max_batches messages; [] when drained."""
        with self._lock:
            if name not in self._queues:
                raise NoSuchQueueError(name)
            q = self._queues[name]
            out = []
            while q and len(out) < max_batches:
                out.append(q.popleft())
            return out

    def approximate_depth(self, name: str) -> int:
        with self._lock:
            if name not in self._queues:
                raise NoSuchQueueError(name)
            return len(self._queues[name])
