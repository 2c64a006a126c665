"""Simulated object store: whole-object put, byte-range get, prefix listing.

Two interchangeable backends are provided. ``MemoryStore`` keeps objects in a
dict; ``DiskStore`` lays objects out as ``<root>/<bucket>/<key>`` files so
datasets larger than memory still work and so the harness can stage data
directly on disk. Both pass the same test suite.

Optional per-call latency (fixed + per-byte) can be injected for
latency/cost experiments; it defaults to zero and never affects results.
"""

from __future__ import annotations

import os
import tempfile
import threading
import time
from dataclasses import dataclass

from .errors import NoSuchObjectError, RangeOutOfBoundsError


@dataclass(frozen=True)
class ObjectRef:
    bucket: str
    key: str

    def __post_init__(self):
        if not self.bucket or not self.key:
            raise ValueError("bucket and key must be non-empty")

    def __str__(self):
        return f"{self.bucket}/{self.key}"


@dataclass(frozen=True)
class ObjectRange:
    ref: ObjectRef
    offset: int
    length: int

    def __post_init__(self):
        if self.offset < 0 or self.length < 0:
            raise ValueError("offset and length must be non-negative")


@dataclass
class StoreLatency:
    """Injected service latency: fixed per call plus a per-byte component."""

    per_call_ms: float = 0.0
    per_byte_ms: float = 0.0

    def apply(self, nbytes: int) -> None:
        delay = self.per_call_ms + self.per_byte_ms * nbytes
        if delay > 0:
            time.sleep(delay / 1000.0)


class ObjectStore:
    """Common interface; concrete backends implement the _raw hooks."""

    def __init__(self, latency: StoreLatency | None = None):
        self._latency = latency or StoreLatency()
        self._lock = threading.RLock()

    # -- backend hooks -------------------------------------------------
    def _raw_put(self, ref: ObjectRef, data: bytes) -> None:
        raise NotImplementedError

    def _raw_get(self, ref: ObjectRef) -> bytes:
        raise NotImplementedError

    def _raw_exists(self, ref: ObjectRef) -> bool:
        raise NotImplementedError

    def _raw_list(self, bucket: str) -> list[tuple[str, int]]:
        raise NotImplementedError

    # -- public API ----------------------------------------------------
    def put_object(self, ref: ObjectRef, data: bytes) -> None:
        self._latency.apply(len(data))
        with self._lock:
            self._raw_put(ref, bytes(data))

    def get_object(self, ref: ObjectRef) -> bytes:
        self._latency.apply(0)
        with self._lock:
            if not self._raw_exists(ref):
                raise NoSuchObjectError(str(ref))
            data = self._raw_get(ref)
        self._latency.apply(len(data))
        return data

    def object_size(self, ref: ObjectRef) -> int:
        with self._lock:
            if not self._raw_exists(ref):
                raise NoSuchObjectError(str(ref))
            return len(self._raw_get(ref))

    def exists(self, ref: ObjectRef) -> bool:
        with self._lock:
            return self._raw_exists(ref)

    def get_range(self, rng: ObjectRange) -> bytes:
        with self._lock:
            if not self._raw_exists(rng.ref):
                raise NoSuchObjectError(str(rng.ref))
            data = self._raw_get(rng.ref)
        if rng.offset + rng.length > len(data):
            raise RangeOutOfBoundsError(
                f"{rng.ref}: range [{rng.offset}, {rng.offset + rng.length}) "
                f"exceeds object size {len(data)}"
            )
        self._latency.apply(rng.length)
        return data[rng.offset : rng.offset + rng.length]

    def list_prefix(self, bucket: str, prefix: str) -> list[tuple[str, int]]:
        self._latency.apply(0)
        with self._lock:
            entries = self._raw_list(bucket)
        return sorted((k, n) for k, n in entries if k.startswith(prefix))


class MemoryStore(ObjectStore):
    def __init__(self, latency: StoreLatency | None = None):
        super().__init__(latency)
        self._objects: dict[tuple[str, str], bytes] = {}

    def _raw_put(self, ref, data):
        self._objects[(ref.bucket, ref.key)] = data

    def _raw_get(self, ref):
        return self._objects[(ref.bucket, ref.key)]

    def _raw_exists(self, ref):
        return (ref.bucket, ref.key) in self._objects

    def _raw_list(self, bucket):
        return [
            (k, len(v)) for (b, k), v in self._objects.items() if b == bucket
        ]


class DiskStore(ObjectStore):
    """Objects as files under ``<root>/<bucket>/<key>``.

    Put is atomic per key (temp file + rename), so concurrent readers see
    either the old or the new object, never a mix.
    """

    def __init__(self, root: str, latency: StoreLatency | None = None):
        super().__init__(latency)
        self._root = os.path.abspath(root)
        os.makedirs(self._root, exist_ok=True)

    def _path(self, ref: ObjectRef) -> str:
        path = os.path.abspath(os.path.join(self._root, ref.bucket, ref.key))
        if not path.startswith(self._root + os.sep):
            raise ValueError(f"key escapes store root: {ref}")
        return path

    def _raw_put(self, ref, data):
        path = self._path(ref)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path))
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def _raw_get(self, ref):
        with open(self._path(ref), "rb") as fh:
            return fh.read()

    def _raw_exists(self, ref):
        return os.path.isfile(self._path(ref))

    def _raw_list(self, bucket):
        base = os.path.join(self._root, bucket)
        if not os.path.isdir(base):
            return []
        out = []
        for dirpath, _dirs, files in os.walk(base):
            for name in files:
                full = os.path.join(dirpath, name)
                key = os.path.relpath(full, base).replace(os.sep, "/")
                out.append((key, os.path.getsize(full)))
        return out
