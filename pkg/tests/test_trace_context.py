"""Tests for trace context propagation."""

import threading

from hypothesis import given
from hypothesis import strategies as st

from src.utils.trace_context import clear_trace, create_trace, get_current_trace, set_trace


class TestTraceContext:
    """Tests for trace ids of benchmark jobs."""

    def teardown_method(self):
        clear_trace()

    @given(label=st.text(min_size=1, max_size=40))
    def test_label_becomes_trace_id(self, label):
        """
        **Property: Deterministic labels are used verbatim**

        A job label such as "dataset/seed=0" is the trace id of that job.
        """
        assert create_trace(label) == label
        assert get_current_trace() == label

    def test_random_trace_ids_are_unique(self):
        """Without a label every trace gets a fresh UUID."""
        ids = {create_trace() for _ in range(100)}
        assert len(ids) == 100

    def test_clear_trace(self):
        """Clearing removes the active trace."""
        set_trace("job")
        clear_trace()
        assert get_current_trace() is None

    def test_threads_do_not_share_traces(self):
        """A trace set in a worker thread does not leak into the caller."""
        create_trace("main")
        seen = []

        def worker():
            seen.append(get_current_trace())
            create_trace("worker")
            seen.append(get_current_trace())

        thread = threading.Thread(target=worker)
        thread.start()
        thread.join()

        assert seen == [None, "worker"]
        assert get_current_trace() == "main"
