"""Exception hierarchy for the flintlet engine."""


class FlintError(Exception):
    """Base class for all engine errors."""


class UnknownFunctionError(FlintError):
    """A function/combiner/partitioner id does not resolve in the registry."""


class EmptySourceError(FlintError):
    """No objects exist under the lineage's source prefix."""


class NoSuchObjectError(FlintError):
    pass


class RangeOutOfBoundsError(FlintError):
    pass


class QueueExistsError(FlintError):
    pass


class NoSuchQueueError(FlintError):
    pass


class MessageTooLargeError(FlintError):
    """An encoded message exceeds the per-message size cap.

    Carries the offending header (when known) so callers can identify the
    batch that failed.
    """

    def __init__(self, message, header=None):
        super().__init__(message)
        self.header = header


class PayloadTooLargeError(FlintError):
    """An invocation request payload exceeds the runtime payload limit."""


class MissingBatchesError(FlintError):
    """A shuffle-read drained its queue with sequence expectations unmet."""


class MemoryLimitExceededError(FlintError):
    """Tracked buffer bytes crossed the invocation memory limit."""


class StageFailedError(FlintError):
    def __init__(self, stage_id, task_id, reason):
        super().__init__(f"stage {stage_id} task {task_id} failed: {reason}")
        self.stage_id = stage_id
        self.task_id = task_id
        self.reason = reason


class UnknownQueryError(FlintError):
    pass
