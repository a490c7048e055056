"""Trace context for attributing log lines to benchmark jobs."""

import contextvars
import uuid

# Context variable for storing the current trace ID
_trace_id_context: contextvars.ContextVar[str | None] = contextvars.ContextVar(
    "trace_id", default=None
)


def create_trace(label: str | None = None) -> str:
    """
    Start a trace in the current context.

    Args:
        label: Deterministic trace id such as "quadratic_uniform/seed=0";
            a random UUID4 is used when omitted

    Returns:
        The trace id now active in this context
    """
    trace_id = label or str(uuid.uuid4())
    set_trace(trace_id)
    return trace_id


def get_current_trace() -> str | None:
    """Return the trace id of the current context, if any."""
    return _trace_id_context.get()


def set_trace(trace_id: str) -> None:
    """Set the trace ID in the current context."""
    _trace_id_context.set(trace_id)


def clear_trace() -> None:
    """Clear the trace ID from the current context."""
    _trace_id_context.set(None)
