"""Run metrics aggregated from the event store."""

from collections import Counter
from dataclasses import dataclass, field
from typing import Any

from src.utils.event_store import EventStore


@dataclass
class RunMetrics:
    """Aggregated statistics of one benchmark run."""

    total_jobs: int
    succeeded_jobs: int
    failed_jobs: int
    success_rate: float
    average_job_duration_ms: float
    total_fits: int
    failures_by_method: dict[str, int] = field(default_factory=dict)

    def to_dict(self, include_timing: bool = True) -> dict[str, Any]:
        """
        Convert metrics to a dictionary.

        Args:
            include_timing: Durations vary run to run; result files pass False
        """
        result: dict[str, Any] = {
            "total_jobs": self.total_jobs,
            "succeeded_jobs": self.succeeded_jobs,
            "failed_jobs": self.failed_jobs,
            "success_rate": self.success_rate,
            "total_fits": self.total_fits,
            "failures_by_method": dict(sorted(self.failures_by_method.items())),
        }
        if include_timing:
            result["average_job_duration_ms"] = self.average_job_duration_ms
        return result


class RunMetricsCalculator:
    """Calculates run metrics from event store data."""

    def __init__(self, event_store: EventStore):
        self.event_store = event_store

    def calculate(self) -> RunMetrics:
        """Aggregate job and fit events into a RunMetrics snapshot."""
        events = self.event_store.get_all_events()

        completes = [e for e in events if e.event_type == "job_complete"]
        failures = [e for e in events if e.event_type == "job_failed"]
        fits = [e for e in events if e.event_type == "fit_complete"]

        total_jobs = len(completes) + len(failures)
        success_rate = (len(completes) / total_jobs * 100) if total_jobs > 0 else 0.0

        durations = [e.duration_ms for e in completes + failures if e.duration_ms is not None]
        average_job_duration_ms = sum(durations) / len(durations) if durations else 0.0

        failures_by_method = Counter(
            str(e.context.get("method", "unknown")) for e in failures
        )

        return RunMetrics(
            total_jobs=total_jobs,
            succeeded_jobs=len(completes),
            failed_jobs=len(failures),
            success_rate=success_rate,
            average_job_duration_ms=average_job_duration_ms,
            total_fits=len(fits),
            failures_by_method=dict(failures_by_method),
        )
