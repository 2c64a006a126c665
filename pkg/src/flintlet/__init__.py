"""flintlet: a serverless dataflow execution engine over a simulated
cloud substrate (object store, message queues, capped function runtime),
plus a benchmark harness with a local oracle."""

from .cost import CostBreakdown, PriceSheet, RunMetrics, cost_of_run
from .executor import Services, TaskDescriptor, run_task
from .faas import FaasRuntime, RuntimeLimits
from .plan import Lineage, PhysicalPlan, build_plan
from .queue import QueueConfig, QueueService
from .registry import FunctionRegistry, default_registry
from .scheduler import Scheduler, SchedulerOptions
from .store import DiskStore, MemoryStore, ObjectRange, ObjectRef

__version__ = "0.1.0"

__all__ = [
    "CostBreakdown",
    "DiskStore",
    "FaasRuntime",
    "FunctionRegistry",
    "Lineage",
    "MemoryStore",
    "ObjectRange",
    "ObjectRef",
    "PhysicalPlan",
    "PriceSheet",
    "QueueConfig",
    "QueueService",
    "RunMetrics",
    "RuntimeLimits",
    "Scheduler",
    "SchedulerOptions",
    "Services",
    "TaskDescriptor",
    "build_plan",
    "cost_of_run",
    "default_registry",
    "run_task",
]
