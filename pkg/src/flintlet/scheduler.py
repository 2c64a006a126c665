"""Driver-side orchestration of a physical plan.

Stages run strictly sequentially behind a completion barrier: no task of
stage i+1 is launched until every task of stage i is done. The scheduler
owns queue lifecycle (created before a shuffle-write stage, all deleted by
run end, success or failure), relaunches chained tasks immediately with
their continuations, retries failed tasks under a fresh attempt id, and
routes descriptors that exceed the invocation payload limit through the
object store.

Scheduler logic is single-threaded over asynchronous invocation handles.
"""

from __future__ import annotations

import time
from concurrent.futures import FIRST_COMPLETED, wait
from dataclasses import dataclass, field

from . import queue as mq
from .cost import RunMetrics
from .errors import NoSuchQueueError, StageFailedError
from .executor import (
    DEFAULT_FLUSH_THRESHOLD,
    Continuation,
    ExecutorReport,
    Services,
    TaskDescriptor,
    make_invocation_handler,
)
from .faas import FaasRuntime, InvocationRecord
from .plan import ObjectSplits, PhysicalPlan, ResultOutput, ShuffleWrite, Stage
from .store import ObjectRef

EXECUTOR_FUNCTION_ID = "flint-executor"


@dataclass
class SchedulerOptions:
    scratch_bucket: str = "flint-scratch"
    retry_budget: int = 2  # re-executions allowed per task after a failure
    flush_threshold_bytes: int = DEFAULT_FLUSH_THRESHOLD
    safety_margin_fraction: float = 0.05
    descriptor_padding_bytes: int = 0  # test hook: inflate every descriptor


@dataclass
class QueryResult:
    value: object
    metrics: RunMetrics
    manifest: dict


@dataclass
class _TaskState:
    task_id: int
    attempt: int = 0
    links: list[dict] = field(default_factory=list)
    attempts: list[dict] = field(default_factory=list)
    messages_per_partition: dict[int, int] = field(default_factory=dict)
    results: list[bytes] = field(default_factory=list)
    done: bool = False


class Scheduler:
    def __init__(
        self,
        services: Services,
        runtime: FaasRuntime,
        options: SchedulerOptions | None = None,
    ):
        self.services = services
        self.runtime = runtime
        self.options = options or SchedulerOptions()
        runtime.register(EXECUTOR_FUNCTION_ID, make_invocation_handler(services))

    # ------------------------------------------------------------------
    def execute_plan(self, plan: PhysicalPlan) -> QueryResult:
        t0 = time.monotonic()
        created_queues: list[str] = []
        stage_manifests: list[dict] = []
        invocations: list[InvocationRecord] = []
        queue_admin_calls = 0
        exec_queue_calls = 0
        final_states: list[_TaskState] = []

        try:
            prev_counts: dict[int, dict[int, dict]] | None = None
            for stage in plan.stages:
                stage_queues: list[str] = []
                if isinstance(stage.output_kind, ShuffleWrite):
                    for p in range(stage.output_kind.num_partitions):
                        name = f"flint-{plan.plan_id}-s{stage.stage_id}-p{p}"
                        self.services.queue.create_queue(name)
                        created_queues.append(name)
                        stage_queues.append(name)
                        queue_admin_calls += 1

                states, recs = self._run_stage(plan, stage, stage_queues, prev_counts)
                invocations.extend(recs)
                exec_queue_calls += sum(
                    link["queueCalls"] for st in states for link in st.links
                )

                if isinstance(stage.output_kind, ShuffleWrite):
                    # per destination partition: accepted attempt + unique
                    # batch count per source task, the dedup contract.
                    prev_counts = {
                        p: {} for p in range(stage.output_kind.num_partitions)
                    }
                    for st in states:
                        for p, n in st.messages_per_partition.items():
                            prev_counts[p][st.task_id] = {
                                "attempt": st.attempt,
                                "count": n,
                            }
                else:
                    final_states = states

                stage_manifests.append(
                    {
                        "stageId": stage.stage_id,
                        "numTasks": stage.num_tasks,
                        "queues": stage_queues,
                        "tasks": [
                            {
                                "taskId": st.task_id,
                                "attempts": st.attempts,
                            }
                            for st in states
                        ],
                    }
                )

            value = self._assemble_result(plan, final_states)
        finally:
            for name in created_queues:
                try:
                    self.services.queue.delete_queue(name)
                    queue_admin_calls += 1
                except NoSuchQueueError:
                    pass

        wall_ms = (time.monotonic() - t0) * 1000.0
        manifest = {
            "v": 1,
            "planId": plan.plan_id,
            "wallClockMs": wall_ms,
            "stages": stage_manifests,
            "queueAdminCalls": queue_admin_calls,
        }
        metrics = RunMetrics(
            invocations=[
                (rec.billed_duration_ms, self.runtime.limits.memory_limit_mb)
                for rec in invocations
            ],
            total_queue_calls=exec_queue_calls + queue_admin_calls,
            wall_clock_ms=wall_ms,
        )
        return QueryResult(value=value, metrics=metrics, manifest=manifest)

    # ------------------------------------------------------------------
    def _run_stage(
        self,
        plan: PhysicalPlan,
        stage: Stage,
        stage_queues: list[str],
        prev_counts: dict[int, dict[int, dict]] | None,
    ) -> tuple[list[_TaskState], list[InvocationRecord]]:
        states = [_TaskState(task_id=t) for t in range(stage.num_tasks)]
        records: list[InvocationRecord] = []
        pending: dict[object, int] = {}  # future -> task_id
        failure: StageFailedError | None = None

        def descriptor_for(st: _TaskState, continuation: Continuation | None):
            return self._build_descriptor(plan, stage, stage_queues, prev_counts, st, continuation)

        for st in states:
            handle = self.launch_task(descriptor_for(st, None))
            pending[handle._future] = st.task_id

        while pending:
            done, _ = wait(list(pending), return_when=FIRST_COMPLETED)
            for fut in done:
                task_id = pending.pop(fut)
                st = states[task_id]
                rec: InvocationRecord = fut.result()
                records.append(rec)
                if not rec.outcome.completed:
                    self._note_link(st, rec, None)
                    if failure is None and st.attempt < self.options.retry_budget:
                        st.attempts.append(
                            {
                                "attempt": st.attempt,
                                "links": list(st.links),
                                "outcome": "failed",
                            }
                        )
                        st.attempt += 1
                        st.links.clear()
                        st.messages_per_partition.clear()
                        st.results.clear()
                        handle = self.launch_task(descriptor_for(st, None))
                        pending[handle._future] = st.task_id
                    elif failure is None:
                        failure = StageFailedError(
                            stage.stage_id, st.task_id, rec.outcome.reason
                        )
                    continue
                report = ExecutorReport.from_bytes(rec.outcome.payload)
                action = self.handle_report(st, report)
                self._note_link(st, rec, report)
                if action == "relaunch" and failure is None:
                    handle = self.launch_task(descriptor_for(st, report.continuation))
                    pending[handle._future] = st.task_id

        for st in states:
            st.attempts.append(
                {
                    "attempt": st.attempt,
                    "links": list(st.links),
                    "outcome": "done" if st.done else "failed",
                }
            )

        if failure is not None:
            raise failure
        return states, records

    def handle_report(self, st: _TaskState, report: ExecutorReport) -> str:
        """Fold a task report into stage state; returns the next action."""
        for p, n in report.messages_sent_per_partition.items():
            st.messages_per_partition[p] = st.messages_per_partition.get(p, 0) + n
        if report.materialized_result is not None:
            st.results.append(report.materialized_result)
        if report.status == "chained":
            return "relaunch"
        st.done = True
        return "none"

    def _note_link(self, st: _TaskState, rec: InvocationRecord, report) -> None:
        st.links.append(
            {
                "link": len(st.links),
                "invocationId": rec.invocation_id,
                "startMs": rec.start_ms,
                "endMs": rec.end_ms,
                "billedMs": rec.billed_duration_ms,
                "wasCold": rec.was_cold,
                "status": report.status if report else "failed",
                "failureReason": rec.outcome.reason,
                "bytesConsumed": report.bytes_consumed if report else None,
                "queueCalls": report.queue_calls if report else 0,
                "recordsIn": report.records_in if report else 0,
                "recordsOut": report.records_out if report else 0,
                "messagesSentPerPartition": dict(report.messages_sent_per_partition)
                if report
                else {},
            }
        )

    # ------------------------------------------------------------------
    def _build_descriptor(
        self,
        plan: PhysicalPlan,
        stage: Stage,
        stage_queues: list[str],
        prev_counts,
        st: _TaskState,
        continuation: Continuation | None,
    ) -> TaskDescriptor:
        if isinstance(stage.input_kind, ObjectSplits):
            rng = stage.input_kind.splits[st.task_id]
            input_spec = {
                "kind": "objectSplit",
                "bucket": rng.ref.bucket,
                "key": rng.ref.key,
                "offset": rng.offset,
                "length": rng.length,
            }
        else:
            input_spec = {
                "kind": "queuePartition",
                "queue": f"flint-{plan.plan_id}-s{stage.stage_id - 1}-p{st.task_id}",
                "expected": {
                    str(src): spec
                    for src, spec in (prev_counts or {}).get(st.task_id, {}).items()
                },
                "mergeFn": stage.input_kind.merge_fn_id,
            }
        if isinstance(stage.output_kind, ShuffleWrite):
            output_spec = {
                "kind": "shuffleWrite",
                "queues": stage_queues,
                "partitioner": stage.output_kind.partitioner_id,
                "numPartitions": stage.output_kind.num_partitions,
            }
        else:
            output_spec = {"kind": "result", "action": stage.output_kind.action.to_dict()}
        budget = self.runtime.limits.deadline_budget_ms()
        return TaskDescriptor(
            plan_id=plan.plan_id,
            stage_id=stage.stage_id,
            task_id=st.task_id,
            attempt=st.attempt,
            pipeline=[t.to_dict() for t in stage.pipeline],
            input_spec=input_spec,
            output_spec=output_spec,
            continuation=continuation,
            flush_threshold_bytes=self.options.flush_threshold_bytes,
            safety_margin_ms=budget * self.options.safety_margin_fraction,
            padding="x" * self.options.descriptor_padding_bytes
            if self.options.descriptor_padding_bytes
            else None,
        )

    def launch_task(self, desc: TaskDescriptor):
        """Encode and invoke; oversized descriptors go via the object store."""
        encoded = desc.encode()
        if len(encoded) > self.runtime.limits.payload_limit_bytes:
            link = desc.continuation.link if desc.continuation else 0
            ref = ObjectRef(
                self.options.scratch_bucket,
                f"flint/{desc.plan_id}/desc/"
                f"s{desc.stage_id}-t{desc.task_id}-a{desc.attempt}-l{link}",
            )
            self.services.store.put_object(ref, encoded)
            stub = mq.encode_obj(
                {"v": 1, "payloadOverflowRef": {"bucket": ref.bucket, "key": ref.key}}
            )
            return self.runtime.invoke_async(EXECUTOR_FUNCTION_ID, stub)
        return self.runtime.invoke_async(EXECUTOR_FUNCTION_ID, encoded)

    # ------------------------------------------------------------------
    def _assemble_result(self, plan: PhysicalPlan, states: list[_TaskState]):
        action = plan.stages[-1].output_kind
        assert isinstance(action, ResultOutput)
        kind = action.action.kind
        if kind == "count":
            return sum(
                mq.decode_obj(chunk) for st in states for chunk in st.results
            )
        if kind == "collect":
            out = []
            for st in sorted(states, key=lambda s: s.task_id):
                for chunk in st.results:
                    out.extend(mq.decode_obj(chunk))
            return out
        keys = []
        for st in sorted(states, key=lambda s: s.task_id):
            for chunk in st.results:
                keys.extend(mq.decode_obj(chunk))
        return {"bucket": action.action.bucket, "prefix": action.action.prefix, "keys": keys}
