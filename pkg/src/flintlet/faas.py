"""Simulated function-as-a-service runtime.

Invocations run in parallel up to ``max_concurrency`` on a pool of warm
slots. Each slot remembers the function ids it has run; first use of a slot
for a function incurs the cold-start latency, reuse the warm-start latency.
Start latencies are metered into the billed duration, never slept, so the
latency model can never change answers.

Time enforcement is cooperative: each invocation gets a deadline on its own
work clock, and well-behaved tasks stop (or chain) before it. A task that
returns past 1.1x the budget without declaring a cooperative stop is failed
as TimedOut. Memory enforcement is by task-reported tracked bytes.

The work clock is pluggable. The default is wall time; tests install a
per-invocation ticking clock to make chaining deterministic.
"""

from __future__ import annotations

import itertools
import json
import threading
import time
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

from .errors import FlintError, MemoryLimitExceededError, PayloadTooLargeError


class RealClock:
    def now_ms(self) -> float:
        return time.monotonic() * 1000.0


class TickingClock:
    """Virtual clock advancing a fixed step per reading.

    Give each invocation its own instance: elapsed work time then depends
    only on how many records the task itself consumed, which makes chaining
    behaviour reproducible under any thread interleaving.
    """

    def __init__(self, step_ms: float = 1.0, start_ms: float = 0.0):
        self._t = start_ms
        self._step = step_ms
        self._lock = threading.Lock()

    def now_ms(self) -> float:
        with self._lock:
            self._t += self._step
            return self._t


@dataclass
class RuntimeLimits:
    memory_limit_mb: int = 3008
    time_limit_ms: float = 300_000.0
    payload_limit_bytes: int = 6_291_456
    max_concurrency: int = 80
    # Cold/warm latencies are placeholders for experiments, not measured
    # values; they only affect metering.
    cold_start_ms: float = 400.0
    warm_start_ms: float = 10.0
    # Multiplier on the wall-clock deadline, for desk-scale chaining tests.
    time_scale: float = 1.0

    def __post_init__(self):
        for name in (
            "memory_limit_mb",
            "time_limit_ms",
            "payload_limit_bytes",
            "max_concurrency",
            "time_scale",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.warm_start_ms > self.cold_start_ms:
            raise ValueError("warm_start_ms must be <= cold_start_ms")

    def deadline_budget_ms(self) -> float:
        return self.time_limit_ms * self.time_scale


@dataclass(frozen=True)
class Outcome:
    kind: str  # completed | failed
    payload: bytes | None = None
    reason: str | None = None

    @property
    def completed(self) -> bool:
        return self.kind == "completed"


@dataclass(frozen=True)
class InvocationRecord:
    invocation_id: str
    function_id: str
    start_ms: float
    end_ms: float
    billed_duration_ms: float
    was_cold: bool
    peak_tracked_bytes: int
    outcome: Outcome

    def to_dict(self) -> dict:
        return {
            "invocationId": self.invocation_id,
            "functionId": self.function_id,
            "startMs": self.start_ms,
            "endMs": self.end_ms,
            "billedDurationMs": self.billed_duration_ms,
            "wasCold": self.was_cold,
            "peakTrackedBytes": self.peak_tracked_bytes,
            "outcome": self.outcome.kind,
            "failureReason": self.outcome.reason,
        }


class ExecutionContext:
    """Handed to the running task: deadline, work clock, memory accounting."""

    def __init__(self, clock, deadline_ms: float, memory_limit_bytes: int):
        self.clock = clock
        self.deadline_ms = deadline_ms
        self.memory_limit_bytes = memory_limit_bytes
        self.peak_tracked_bytes = 0
        self.cooperative_stop = False

    def track(self, nbytes: int) -> None:
        if nbytes > self.peak_tracked_bytes:
            self.peak_tracked_bytes = nbytes
        if nbytes > self.memory_limit_bytes:
            raise MemoryLimitExceededError(
                f"tracked {nbytes} bytes > limit {self.memory_limit_bytes}"
            )

    def mark_cooperative_stop(self) -> None:
        """Declare a deliberate early stop (executor chaining)."""
        self.cooperative_stop = True


class _Slot:
    def __init__(self, index: int):
        self.index = index
        self.seen: set[str] = set()


class InvocationHandle:
    def __init__(self, future: Future):
        self._future = future

    def result(self) -> InvocationRecord:
        return self._future.result()

    def done(self) -> bool:
        return self._future.done()


class FaasRuntime:
    """Thread-safe runtime; invocations execute on a bounded worker pool."""

    def __init__(
        self,
        limits: RuntimeLimits | None = None,
        work_clock_factory: Callable[[], object] | None = None,
    ):
        self.limits = limits or RuntimeLimits()
        self._work_clock_factory = work_clock_factory or RealClock
        self._functions: dict[str, Callable] = {}
        self._pool = ThreadPoolExecutor(max_workers=self.limits.max_concurrency)
        self._slots = [_Slot(i) for i in range(self.limits.max_concurrency)]
        self._free = list(reversed(range(self.limits.max_concurrency)))
        self._lock = threading.Lock()
        self._meter = RealClock()
        self._ids = itertools.count()
        self._running = 0
        self.peak_concurrency = 0
        self.invocation_log: list[InvocationRecord] = []

    def register(self, function_id: str, fn: Callable) -> None:
        """fn(payload: bytes, ctx: ExecutionContext) -> bytes."""
        self._functions[function_id] = fn

    def invoke_async(self, function_id: str, payload: bytes) -> InvocationHandle:
        if len(payload) > self.limits.payload_limit_bytes:
            raise PayloadTooLargeError(
                f"payload of {len(payload)} bytes exceeds limit "
                f"{self.limits.payload_limit_bytes}"
            )
        if function_id not in self._functions:
            raise FlintError(f"no runtime function registered as {function_id!r}")
        inv_id = f"inv-{next(self._ids):06d}"
        future = self._pool.submit(self._run, inv_id, function_id, bytes(payload))
        return InvocationHandle(future)

    def await_(self, handle: InvocationHandle) -> InvocationRecord:
        return handle.result()

    def close(self) -> None:
        self._pool.shutdown(wait=True)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False

    def dump_log(self, fp) -> None:
        """Write the invocation log as JSON lines."""
        for rec in list(self.invocation_log):
            fp.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")

    # ------------------------------------------------------------------
    def _run(self, inv_id: str, function_id: str, payload: bytes) -> InvocationRecord:
        with self._lock:
            slot = self._slots[self._free.pop()]
            self._running += 1
            if self._running > self.peak_concurrency:
                self.peak_concurrency = self._running
        start_ms = self._meter.now_ms()
        was_cold = function_id not in slot.seen
        slot.seen.add(function_id)
        startup_ms = (
            self.limits.cold_start_ms if was_cold else self.limits.warm_start_ms
        )

        budget = self.limits.deadline_budget_ms()
        work_clock = self._work_clock_factory()
        work_start = work_clock.now_ms()
        ctx = ExecutionContext(
            clock=work_clock,
            deadline_ms=work_start + budget,
            memory_limit_bytes=self.limits.memory_limit_mb * 1024 * 1024,
        )
        try:
            response = self._functions[function_id](payload, ctx)
            work_elapsed = work_clock.now_ms() - work_start
            if work_elapsed > budget * 1.1 and not ctx.cooperative_stop:
                outcome = Outcome(
                    "failed",
                    reason=f"TimedOut: {work_elapsed:.0f} ms > budget {budget:.0f} ms",
                )
            else:
                outcome = Outcome("completed", payload=response)
        except MemoryLimitExceededError as exc:
            outcome = Outcome("failed", reason=f"OutOfMemory: {exc}")
        except FlintError as exc:
            outcome = Outcome("failed", reason=f"{type(exc).__name__}: {exc}")
        except Exception as exc:  # noqa: BLE001 - any task crash becomes Failed
            outcome = Outcome("failed", reason=f"TaskCrashed: {exc!r}")
        finally:
            with self._lock:
                self._free.append(slot.index)
                self._running -= 1

        end_ms = self._meter.now_ms()
        record = InvocationRecord(
            invocation_id=inv_id,
            function_id=function_id,
            start_ms=start_ms,
            end_ms=end_ms,
            billed_duration_ms=(end_ms - start_ms) + startup_ms,
            was_cold=was_cold,
            peak_tracked_bytes=ctx.peak_tracked_bytes,
            outcome=outcome,
        )
        with self._lock:
            self.invocation_log.append(record)
        return record
