"""Dollar-cost model for a run: GB-seconds plus per-request charges.

Billed duration rounds up to a configurable granularity (100 ms by
default) before entering the GB-second product. Default rates mirror
public AWS list prices at the time of implementation; they are
configuration, and tests always pass explicit rates.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class PriceSheet:
    rate_per_gb_second: float = 0.0000166667
    rate_per_invocation: float = 0.0000002
    rate_per_queue_call: float = 0.0000004

    def __post_init__(self):
        if min(
            self.rate_per_gb_second,
            self.rate_per_invocation,
            self.rate_per_queue_call,
        ) < 0:
            raise ValueError("rates must be non-negative")

    def scaled(self, k: float) -> "PriceSheet":
        return PriceSheet(
            self.rate_per_gb_second * k,
            self.rate_per_invocation * k,
            self.rate_per_queue_call * k,
        )


@dataclass
class RunMetrics:
    """Per-run totals; invocations are (billed_duration_ms, memory_mb)."""

    invocations: list[tuple[float, int]] = field(default_factory=list)
    total_queue_calls: int = 0
    wall_clock_ms: float = 0.0

    @property
    def total_invocations(self) -> int:
        return len(self.invocations)

    def to_dict(self) -> dict:
        return {
            "totalInvocations": self.total_invocations,
            "totalQueueCalls": self.total_queue_calls,
            "wallClockMs": self.wall_clock_ms,
            "invocations": [
                {"billedDurationMs": b, "memoryMB": m} for b, m in self.invocations
            ],
        }


@dataclass(frozen=True)
class CostBreakdown:
    compute: float
    requests: float
    queue: float

    @property
    def total(self) -> float:
        return self.compute + self.requests + self.queue

    def to_dict(self) -> dict:
        return {
            "compute": self.compute,
            "requests": self.requests,
            "queue": self.queue,
            "total": self.total,
        }


def round_up_ms(duration_ms: float, granularity_ms: int) -> float:
    if granularity_ms <= 0:
        return duration_ms
    return math.ceil(duration_ms / granularity_ms) * granularity_ms


def cost_of_run(
    metrics: RunMetrics,
    prices: PriceSheet,
    billing_granularity_ms: int = 100,
) -> CostBreakdown:
    compute = 0.0
    for billed_ms, memory_mb in metrics.invocations:
        rounded = round_up_ms(billed_ms, billing_granularity_ms)
        compute += (memory_mb / 1024.0) * (rounded / 1000.0) * prices.rate_per_gb_second
    return CostBreakdown(
        compute=compute,
        requests=metrics.total_invocations * prices.rate_per_invocation,
        queue=metrics.total_queue_calls * prices.rate_per_queue_call,
    )


def metrics_from_log_lines(lines, memory_mb: int, total_queue_calls: int = 0) -> RunMetrics:
    """Build metrics from a runtime invocation log (JSON lines)."""
    metrics = RunMetrics(total_queue_calls=total_queue_calls)
    for line in lines:
        line = line.strip()
        if not line:
            continue
        rec = json.loads(line)
        metrics.invocations.append((rec["billedDurationMs"], memory_mb))
    return metrics


def format_cost_table(rows: list[dict]) -> str:
    """Aligned plain-text table: Query | Latency(s) | Cost(USD)."""
    header = ("Query", "Latency(s)", "Cost(USD)")
    body = [
        (str(r["query"]), f"{r['latency_s']:.3f}", f"{r['cost_usd']:.6f}")
        for r in rows
    ]
    widths = [
        max(len(header[i]), max((len(b[i]) for b in body), default=0))
        for i in range(3)
    ]
    lines = [
        " | ".join(header[i].ljust(widths[i]) for i in range(3)),
        "-+-".join("-" * w for w in widths),
    ]
    lines += [" | ".join(b[i].ljust(widths[i]) for i in range(3)) for b in body]
    return "\n".join(lines)
