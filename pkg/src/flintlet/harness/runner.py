"""Query execution entry points and the flint-vs-local comparison report."""

from __future__ import annotations

import datetime as dt
import json
import time
from dataclasses import dataclass

from ..cost import RunMetrics, cost_of_run, format_cost_table
from ..executor import Services
from ..faas import FaasRuntime
from ..plan import build_plan
from ..queue import QueueService
from ..registry import default_registry
from ..scheduler import Scheduler, SchedulerOptions
from ..store import DiskStore, MemoryStore, ObjectStore
from .config import Config
from .datagen import generate_dataset
from .local import run_local
from .queries import build_lineage, compare_results, register_query_functions


@dataclass
class Engine:
    """Shared service handles for a sequence of query runs."""

    config: Config
    store: ObjectStore
    services: Services

    @classmethod
    def create(cls, config: Config, store: ObjectStore | None = None) -> "Engine":
        if store is None:
            if config.harness.store_backend == "disk":
                store = DiskStore(config.harness.store_root)
            else:
                store = MemoryStore()
        registry = default_registry()
        register_query_functions(registry)
        services = Services(
            store=store, queue=QueueService(config.queue), registry=registry
        )
        return cls(config=config, store=store, services=services)

    def dataset_present(self) -> bool:
        h = self.config.harness
        return bool(self.store.list_prefix(h.bucket, h.data_prefix()))

    def ensure_dataset(self) -> None:
        h = self.config.harness
        if not self.dataset_present():
            generate_dataset(
                self.store, h.bucket, h.prefix, h.records, h.seed, h.parts
            )

    def lineage_for(self, qid: int):
        h = self.config.harness
        return build_lineage(
            qid,
            h.bucket,
            h.data_prefix(),
            h.partitions,
            self.services.registry,
            self.store,
            weather_key=h.weather_key(),
        )

    def plan_for(self, qid: int, plan_id: str | None = None):
        h = self.config.harness
        catalog = self.store.list_prefix(h.bucket, h.data_prefix())
        return build_plan(
            self.lineage_for(qid), h.split_size, catalog, self.services.registry,
            plan_id=plan_id,
        )


@dataclass
class QueryRun:
    qid: int
    mode: str
    value: object
    latency_s: float
    metrics: RunMetrics | None = None
    manifest: dict | None = None
    cost_usd: float = 0.0


def run_query(qid: int, mode: str, config: Config, engine: Engine | None = None) -> QueryRun:
    engine = engine or Engine.create(config)
    engine.ensure_dataset()
    t0 = time.monotonic()
    if mode == "local":
        value = run_local(
            engine.lineage_for(qid), engine.store, engine.services.registry
        )
        return QueryRun(
            qid=qid, mode=mode, value=value, latency_s=time.monotonic() - t0
        )
    if mode != "flint":
        raise ValueError(f"unknown mode {mode!r}")
    plan = engine.plan_for(qid)
    with FaasRuntime(config.limits) as runtime:
        scheduler = Scheduler(
            engine.services,
            runtime,
            SchedulerOptions(
                scratch_bucket=config.harness.scratch_bucket,
                flush_threshold_bytes=config.harness.flush_threshold_bytes,
            ),
        )
        result = scheduler.execute_plan(plan)
    latency = time.monotonic() - t0
    cost = cost_of_run(result.metrics, config.prices).total
    return QueryRun(
        qid=qid,
        mode=mode,
        value=result.value,
        latency_s=latency,
        metrics=result.metrics,
        manifest=result.manifest,
        cost_usd=cost,
    )


def run_bench(config: Config, qids=tuple(range(7)), engine: Engine | None = None) -> dict:
    """All queries in both modes; returns the comparison report dict."""
    engine = engine or Engine.create(config)
    engine.ensure_dataset()
    rows = []
    for qid in qids:
        flint = run_query(qid, "flint", config, engine)
        local = run_query(qid, "local", config, engine)
        diff = compare_results(qid, flint.value, local.value)
        rows.append(
            {
                "query": qid,
                "flint": {
                    "latencySeconds": flint.latency_s,
                    "costUsd": flint.cost_usd,
                },
                "local": {
                    "latencySeconds": local.latency_s,
                    "costUsd": 0.0,
                },
                "verdict": "OK" if diff is None else "MISMATCH",
                "firstDifference": diff,
            }
        )
    return {
        "v": 1,
        "generatedAt": dt.datetime.now(dt.timezone.utc).isoformat(),
        "rows": rows,
    }


def report_ok(report: dict) -> bool:
    return all(row["verdict"] == "OK" for row in report["rows"])


def format_report(report: dict) -> str:
    table = format_cost_table(
        [
            {
                "query": row["query"],
                "latency_s": row["flint"]["latencySeconds"],
                "cost_usd": row["flint"]["costUsd"],
            }
            for row in report["rows"]
        ]
    )
    verdicts = "\n".join(
        f"Q{row['query']}: {row['verdict']}"
        + (f" ({row['firstDifference']})" if row["firstDifference"] else "")
        for row in report["rows"]
    )
    return table + "\n\n" + verdicts


def write_report(report: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
