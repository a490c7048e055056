"""Property-based tests for structured logging."""

import json
from io import StringIO

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from src.utils.logger import StructuredLogger
from src.utils.trace_context import clear_trace, create_trace


class TestLoggerJSONFormat:
    """Tests for JSON log format compliance."""

    @given(
        level=st.sampled_from(["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]),
        message=st.text(min_size=1),
        context=st.dictionaries(
            st.text(min_size=1, max_size=20).filter(lambda x: x[0].isalpha()),
            st.one_of(st.text(), st.integers(), st.booleans()),
            max_size=5,
        ),
    )
    def test_log_entries_have_required_fields(self, level, message, context):
        """
        **Property: Log entries have required fields**

        Every entry is one JSON object with timestamp, level, component and
        message, plus the context when one is given.
        """
        stream = StringIO()
        logger = StructuredLogger("test_component", level="DEBUG", stream=stream)
        logger.log(level, message, context or None)

        entry = json.loads(stream.getvalue().strip())
        assert entry["level"] == level
        assert entry["component"] == "test_component"
        assert entry["message"] == message
        assert entry["timestamp"].endswith("Z")
        assert "T" in entry["timestamp"]
        if context:
            assert entry["context"] == context
        else:
            assert "context" not in entry

    @given(message=st.text(min_size=1))
    def test_error_entries_carry_exception_details(self, message):
        """
        **Property: Errors include exception details**

        An error logged with an exception records its type, message and stack trace.
        """
        stream = StringIO()
        logger = StructuredLogger("test_component", stream=stream)
        try:
            raise ValueError(message)
        except ValueError as e:
            logger.error("failed", exception=e)

        entry = json.loads(stream.getvalue().strip())
        assert entry["exception"]["type"] == "ValueError"
        assert entry["exception"]["message"] == message
        assert "Traceback" in entry["exception"]["stack_trace"]


class TestLoggerLevels:
    """Tests for the level threshold."""

    def test_entries_below_threshold_are_dropped(self):
        """DEBUG entries are not written at WARNING level."""
        stream = StringIO()
        logger = StructuredLogger("c", level="WARNING", stream=stream)
        logger.debug("quiet")
        logger.info("quiet")
        logger.warning("loud")

        lines = stream.getvalue().strip().splitlines()
        assert len(lines) == 1
        assert json.loads(lines[0])["message"] == "loud"

    def test_unknown_level_is_written_as_info(self):
        """Unknown levels fall back to INFO."""
        stream = StringIO()
        StructuredLogger("c", level="DEBUG", stream=stream).log("verbose", "m")
        assert json.loads(stream.getvalue())["level"] == "INFO"

    def test_numpy_values_are_serialized(self):
        """numpy scalars and arrays in the context are written as JSON numbers and lists."""
        stream = StringIO()
        StructuredLogger("c", stream=stream).info("m", {"value": np.float64(0.5), "arr": np.ones(2)})
        entry = json.loads(stream.getvalue())
        assert entry["context"] == {"value": 0.5, "arr": [1.0, 1.0]}

    def test_file_output(self, tmp_path):
        """Entries are appended to the configured log file."""
        path = tmp_path / "logs" / "run.log"
        logger = StructuredLogger("c", file_path=str(path), stream=StringIO())
        logger.info("first")
        logger.info("second")

        lines = path.read_text().splitlines()
        assert [json.loads(line)["message"] for line in lines] == ["first", "second"]


class TestLoggerTracing:
    """Tests for job attribution and timing."""

    def test_active_trace_is_attached(self):
        stream = StringIO()
        logger = StructuredLogger("c", stream=stream)
        create_trace("sin_uniform/seed=2")
        try:
            logger.info("inside")
        finally:
            clear_trace()
        logger.info("outside")

        inside, outside = (json.loads(line) for line in stream.getvalue().splitlines())
        assert inside["trace_id"] == "sin_uniform/seed=2"
        assert "trace_id" not in outside

    def test_timed_logs_start_and_completion(self):
        stream = StringIO()
        logger = StructuredLogger("c", level="DEBUG", stream=stream)
        with logger.timed("Refit", {"n": 20}) as fields:
            fields["steps"] = 7

        start, done = (json.loads(line) for line in stream.getvalue().splitlines())
        assert start["level"] == "DEBUG"
        assert start["context"] == {"n": 20}
        assert done["message"] == "Refit"
        assert done["level"] == "INFO"
        assert done["context"]["steps"] == 7
        assert done["context"]["duration_ms"] >= 0

    def test_timed_skips_completion_when_the_block_raises(self):
        stream = StringIO()
        logger = StructuredLogger("c", level="INFO", stream=stream)
        with pytest.raises(RuntimeError), logger.timed("Refit"):
            raise RuntimeError("boom")
        assert stream.getvalue() == ""
