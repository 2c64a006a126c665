"""Dataflow lineages and their staged physical form.

A lineage is the logical query: an object-store source, an ordered list of
transformations, and a terminating action. ``build_plan`` splits it at
shuffle boundaries (reduce-by-key / partition-by) into stages, each a
maximal run of narrow per-record transformations. Shuffle-read stages start
with a key-merge step carried on their input spec.

Everything here is a pure function over immutable inputs.
"""

from __future__ import annotations

import json
import uuid
from dataclasses import dataclass

from .errors import EmptySourceError, UnknownFunctionError
from .registry import FunctionRegistry
from .store import ObjectRange, ObjectRef

NARROW_KINDS = ("map", "filter", "flatMap")
WIDE_KINDS = ("reduceByKey", "partitionBy")

DEFAULT_SPLIT_SIZE = 32 * 1024 * 1024


@dataclass(frozen=True)
class Transformation:
    kind: str
    fn_id: str | None = None
    num_partitions: int | None = None
    partitioner_id: str = "hash"

    def is_wide(self) -> bool:
        return self.kind in WIDE_KINDS

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.fn_id is not None:
            d["fn"] = self.fn_id
        if self.num_partitions is not None:
            d["numPartitions"] = self.num_partitions
        if self.is_wide():
            d["partitioner"] = self.partitioner_id
        return d


def map_(fn_id: str) -> Transformation:
    return Transformation("map", fn_id=fn_id)


def filter_(fn_id: str) -> Transformation:
    return Transformation("filter", fn_id=fn_id)


def flat_map(fn_id: str) -> Transformation:
    return Transformation("flatMap", fn_id=fn_id)


def reduce_by_key(combine_fn_id: str, num_partitions: int) -> Transformation:
    return Transformation(
        "reduceByKey", fn_id=combine_fn_id, num_partitions=num_partitions
    )


def partition_by(partitioner_id: str, num_partitions: int) -> Transformation:
    return Transformation(
        "partitionBy", num_partitions=num_partitions, partitioner_id=partitioner_id
    )


@dataclass(frozen=True)
class Action:
    kind: str  # count | collect | saveAsText
    bucket: str | None = None
    prefix: str | None = None

    def __post_init__(self):
        if self.kind == "saveAsText" and not (self.bucket and self.prefix):
            raise ValueError("saveAsText needs a non-empty bucket and prefix")

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "saveAsText":
            d["bucket"] = self.bucket
            d["prefix"] = self.prefix
        return d


COUNT = Action("count")
COLLECT = Action("collect")


def save_as_text(bucket: str, prefix: str) -> Action:
    return Action("saveAsText", bucket=bucket, prefix=prefix)


@dataclass(frozen=True)
class Lineage:
    source_bucket: str
    source_prefix: str
    transformations: tuple[Transformation, ...]
    action: Action

    def validate(self, registry: FunctionRegistry) -> None:
        for t in self.transformations:
            if t.kind in NARROW_KINDS or t.kind == "reduceByKey":
                if not registry.has_function(t.fn_id):
                    raise UnknownFunctionError(f"function id {t.fn_id!r}")
            if t.is_wide():
                if not registry.has_partitioner(t.partitioner_id):
                    raise UnknownFunctionError(
                        f"partitioner id {t.partitioner_id!r}"
                    )
                if t.num_partitions is None or t.num_partitions < 1:
                    raise ValueError(f"{t.kind} needs numPartitions >= 1")


@dataclass(frozen=True)
class ObjectSplits:
    splits: tuple[ObjectRange, ...]

    kind = "objectSplits"


@dataclass(frozen=True)
class QueuePartitions:
    merge_fn_id: str | None  # combine fn for reduce boundaries, None for partitionBy

    kind = "queuePartitions"


@dataclass(frozen=True)
class ShuffleWrite:
    num_partitions: int
    partitioner_id: str

    kind = "shuffleWrite"


@dataclass(frozen=True)
class ResultOutput:
    action: Action

    kind = "result"


@dataclass(frozen=True)
class Stage:
    stage_id: int
    pipeline: tuple[Transformation, ...]
    input_kind: ObjectSplits | QueuePartitions
    output_kind: ShuffleWrite | ResultOutput
    num_tasks: int

    def to_dict(self) -> dict:
        if isinstance(self.input_kind, ObjectSplits):
            inp = {
                "kind": "objectSplits",
                "splits": [
                    {
                        "bucket": r.ref.bucket,
                        "key": r.ref.key,
                        "offset": r.offset,
                        "length": r.length,
                    }
                    for r in self.input_kind.splits
                ],
            }
        else:
            inp = {"kind": "queuePartitions", "mergeFn": self.input_kind.merge_fn_id}
        if isinstance(self.output_kind, ShuffleWrite):
            out = {
                "kind": "shuffleWrite",
                "numPartitions": self.output_kind.num_partitions,
                "partitioner": self.output_kind.partitioner_id,
            }
        else:
            out = {"kind": "result", "action": self.output_kind.action.to_dict()}
        return {
            "stageId": self.stage_id,
            "pipeline": [t.to_dict() for t in self.pipeline],
            "input": inp,
            "output": out,
            "numTasks": self.num_tasks,
        }


@dataclass(frozen=True)
class PhysicalPlan:
    plan_id: str
    stages: tuple[Stage, ...]

    def __post_init__(self):
        if not self.stages:
            raise ValueError("a plan needs at least one stage")
        if not isinstance(self.stages[-1].output_kind, ResultOutput):
            raise ValueError("final stage must be the result stage")
        for i, stage in enumerate(self.stages[:-1]):
            if not isinstance(stage.output_kind, ShuffleWrite):
                raise ValueError("only the final stage may carry the action")
            nxt = self.stages[i + 1]
            if not isinstance(nxt.input_kind, QueuePartitions):
                raise ValueError("stage after a shuffle must read queues")
            if nxt.num_tasks != stage.output_kind.num_partitions:
                raise ValueError(
                    "downstream task count must equal upstream numPartitions"
                )

    def to_dict(self) -> dict:
        return {
            "v": 1,
            "planId": self.plan_id,
            "stages": [s.to_dict() for s in self.stages],
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=False)


def split_input(
    bucket: str, objects: list[tuple[str, int]], split_size: int
) -> list[ObjectRange]:
    """Tile each object with contiguous splits; the last one may be short."""
    if split_size < 1:
        raise ValueError("split_size must be >= 1")
    ranges = []
    for key, size in objects:
        ref = ObjectRef(bucket, key)
        offset = 0
        while offset < size:
            length = min(split_size, size - offset)
            ranges.append(ObjectRange(ref, offset, length))
            offset += length
    return ranges


def build_plan(
    lineage: Lineage,
    split_size: int,
    catalog: list[tuple[str, int]],
    registry: FunctionRegistry,
    plan_id: str | None = None,
) -> PhysicalPlan:
    """Stage the lineage at shuffle boundaries.

    ``catalog`` is the (key, size) listing of the source prefix, as returned
    by the object store.
    """
    lineage.validate(registry)
    if not catalog:
        raise EmptySourceError(
            f"no objects under {lineage.source_bucket}/{lineage.source_prefix}"
        )

    splits = split_input(lineage.source_bucket, catalog, split_size)
    plan_id = plan_id or uuid.uuid4().hex[:12]

    stages: list[Stage] = []
    pending: list[Transformation] = []
    input_kind: ObjectSplits | QueuePartitions = ObjectSplits(tuple(splits))
    num_tasks = len(splits)

    for t in lineage.transformations:
        if t.is_wide():
            stages.append(
                Stage(
                    stage_id=len(stages),
                    pipeline=tuple(pending),
                    input_kind=input_kind,
                    output_kind=ShuffleWrite(t.num_partitions, t.partitioner_id),
                    num_tasks=num_tasks,
                )
            )
            pending = []
            merge_fn = t.fn_id if t.kind == "reduceByKey" else None
            input_kind = QueuePartitions(merge_fn)
            num_tasks = t.num_partitions
        else:
            pending.append(t)

    stages.append(
        Stage(
            stage_id=len(stages),
            pipeline=tuple(pending),
            input_kind=input_kind,
            output_kind=ResultOutput(lineage.action),
            num_tasks=num_tasks,
        )
    )
    return PhysicalPlan(plan_id=plan_id, stages=tuple(stages))
