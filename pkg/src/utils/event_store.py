"""Append-only record of benchmark jobs and fits, shared across worker threads."""

import itertools
import threading
from collections import deque
from collections.abc import Callable
from dataclasses import asdict, dataclass, field
from datetime import UTC, datetime
from typing import Any, Literal

EventType = Literal["job_start", "job_complete", "job_failed", "fit_complete"]

DEFAULT_CAPACITY = 10_000


def _utc_now() -> str:
    return datetime.now(UTC).isoformat().replace("+00:00", "Z")


@dataclass(frozen=True)
class Event:
    """One run event; `sequence` orders events across threads, the timestamp is informational."""

    sequence: int
    trace_id: str
    event_type: EventType
    component: str
    message: str
    context: dict[str, Any] = field(default_factory=dict)
    duration_ms: float | None = None
    timestamp: str = field(default_factory=_utc_now)

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        if self.duration_ms is None:
            del data["duration_ms"]
        return data


class EventStore:
    """Bounded in-memory event log. Once full, the oldest events are evicted."""

    def __init__(self, max_size: int = DEFAULT_CAPACITY):
        if max_size < 1:
            raise ValueError(f"max_size must be positive, got {max_size}")
        self.max_size = max_size
        self._events: deque[Event] = deque(maxlen=max_size)
        self._sequence = itertools.count(1)
        self._lock = threading.Lock()

    def add_event(
        self,
        trace_id: str,
        event_type: EventType,
        component: str,
        message: str,
        context: dict[str, Any] | None = None,
        duration_ms: float | None = None,
    ) -> Event:
        """Record an event under `trace_id` (a job label such as "sin_uniform/seed=0")."""
        with self._lock:
            event = Event(
                next(self._sequence),
                trace_id,
                event_type,
                component,
                message,
                dict(context or {}),
                duration_ms,
            )
            self._events.append(event)
        return event

    def _select(self, keep: Callable[[Event], bool]) -> list[Event]:
        with self._lock:
            return [event for event in self._events if keep(event)]

    def get_events_by_trace(self, trace_id: str) -> list[Event]:
        return self._select(lambda event: event.trace_id == trace_id)

    def get_events_by_type(self, event_type: EventType, limit: int = 0) -> list[Event]:
        """Events of one type in insertion order; a positive limit keeps only the newest."""
        matching = self._select(lambda event: event.event_type == event_type)
        return matching[-limit:] if limit > 0 else matching

    def get_all_events(self) -> list[Event]:
        return self._select(lambda event: True)

    def size(self) -> int:
        with self._lock:
            return len(self._events)

    def clear(self) -> None:
        with self._lock:
            self._events.clear()
