"""Property-based tests for the in-memory event store."""

import threading

import pytest
from hypothesis import given
from hypothesis import strategies as st

from src.utils.event_store import EventStore


class TestEventStoreOrdering:
    """Tests for event store ordering and trace history."""

    @given(
        num_events=st.integers(min_value=1, max_value=50),
        num_traces=st.integers(min_value=1, max_value=5),
    )
    def test_trace_history_is_complete_and_ordered(self, num_events, num_traces):
        """
        **Property: Trace queries return the complete history in order**

        Every event of a trace is returned, in insertion order.
        """
        store = EventStore()
        traces = [f"dataset/seed={i}" for i in range(num_traces)]
        expected = {trace: [] for trace in traces}

        for i in range(num_events):
            trace_id = traces[i % num_traces]
            event = store.add_event(
                trace_id=trace_id,
                event_type="job_start",
                component="Benchmark",
                message=f"Event {i}",
                context={"index": i},
            )
            expected[trace_id].append(event.sequence)

        for trace_id in traces:
            retrieved = store.get_events_by_trace(trace_id)
            assert [e.sequence for e in retrieved] == expected[trace_id]
            assert all(e.trace_id == trace_id for e in retrieved)

    @given(max_size=st.integers(min_value=1, max_value=20), extra=st.integers(0, 20))
    def test_store_is_bounded(self, max_size, extra):
        """
        **Property: The store never exceeds its capacity**

        Oldest events are dropped first.
        """
        store = EventStore(max_size=max_size)
        for i in range(max_size + extra):
            store.add_event("t", "fit_complete", "Optimizer", f"fit {i}")

        events = store.get_all_events()
        assert store.size() == max_size
        assert events[-1].message == f"fit {max_size + extra - 1}"


class TestEventStoreQueries:
    """Tests for type queries and housekeeping."""

    def test_get_events_by_type_with_limit(self):
        """The limit keeps the most recent matching events."""
        store = EventStore()
        for i in range(5):
            store.add_event("t", "job_failed", "Benchmark", f"failure {i}")
            store.add_event("t", "job_complete", "Benchmark", f"ok {i}")

        failures = store.get_events_by_type("job_failed", limit=2)
        assert [e.message for e in failures] == ["failure 3", "failure 4"]
        assert len(store.get_events_by_type("job_complete")) == 5

    def test_to_dict_omits_missing_duration(self):
        """Events without a duration serialize without the field."""
        store = EventStore()
        event = store.add_event("t", "job_start", "Benchmark", "start")
        assert "duration_ms" not in event.to_dict()
        timed = store.add_event("t", "job_complete", "Benchmark", "done", duration_ms=1.5)
        assert timed.to_dict()["duration_ms"] == 1.5

    def test_clear(self):
        store = EventStore()
        store.add_event("t", "job_start", "Benchmark", "start")
        store.clear()
        assert store.size() == 0

    def test_concurrent_writers_get_unique_sequences(self):
        """Sequences stay unique when worker threads write concurrently."""
        store = EventStore()

        def writer(label):
            for i in range(100):
                store.add_event(label, "fit_complete", "Optimizer", str(i))

        threads = [threading.Thread(target=writer, args=(f"job{i}",)) for i in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

        sequences = [e.sequence for e in store.get_all_events()]
        assert len(sequences) == 400
        assert len(set(sequences)) == 400

    def test_capacity_must_be_positive(self):
        with pytest.raises(ValueError):
            EventStore(max_size=0)
