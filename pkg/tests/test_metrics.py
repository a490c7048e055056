"""Tests for run metrics aggregation."""

from hypothesis import given
from hypothesis import strategies as st

from src.utils.event_store import EventStore
from src.utils.metrics import RunMetricsCalculator


class TestRunMetrics:
    """Tests for RunMetricsCalculator."""

    @given(
        succeeded=st.integers(min_value=0, max_value=20),
        failed_methods=st.lists(st.sampled_from(["GGN", "RegVarAmortized", "FullHessian"]), max_size=10),
    )
    def test_counts_match_events(self, succeeded, failed_methods):
        """
        **Property: Job counts equal the recorded outcomes**

        Totals, the success rate and failures per method follow the event store.
        """
        store = EventStore()
        for _ in range(succeeded):
            store.add_event("t", "job_complete", "Benchmark", "ok", {"method": "MAP"}, 10.0)
        for method in failed_methods:
            store.add_event("t", "job_failed", "Benchmark", "boom", {"method": method}, 20.0)

        metrics = RunMetricsCalculator(store).calculate()
        total = succeeded + len(failed_methods)
        assert metrics.total_jobs == total
        assert metrics.succeeded_jobs == succeeded
        assert metrics.failed_jobs == len(failed_methods)
        assert sum(metrics.failures_by_method.values()) == len(failed_methods)
        if total:
            assert metrics.success_rate == succeeded / total * 100
        else:
            assert metrics.success_rate == 0.0

    def test_fit_events_are_counted(self):
        store = EventStore()
        for _ in range(3):
            store.add_event("t", "fit_complete", "Optimizer", "fit")
        assert RunMetricsCalculator(store).calculate().total_fits == 3

    def test_average_duration(self):
        store = EventStore()
        store.add_event("t", "job_complete", "Benchmark", "ok", duration_ms=10.0)
        store.add_event("t", "job_failed", "Benchmark", "boom", duration_ms=30.0)
        assert RunMetricsCalculator(store).calculate().average_job_duration_ms == 20.0

    def test_result_files_exclude_timing(self):
        """Durations are left out when metrics are written into result files."""
        store = EventStore()
        store.add_event("t", "job_complete", "Benchmark", "ok", duration_ms=10.0)
        payload = RunMetricsCalculator(store).calculate().to_dict(include_timing=False)
        assert "average_job_duration_ms" not in payload
        assert payload["total_jobs"] == 1
