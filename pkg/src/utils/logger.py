"""JSON-lines logging tagged with the trace of the running benchmark job."""

import json
import sys
import time
import traceback
from collections.abc import Iterator
from contextlib import contextmanager
from datetime import UTC, datetime
from pathlib import Path
from typing import Any, TextIO

from src.utils.config import LOG_LEVELS, config
from src.utils.trace_context import get_current_trace

_LEVEL_RANK = {name: rank for rank, name in enumerate(LOG_LEVELS)}

Context = dict[str, Any] | None


def _utc_now() -> str:
    return datetime.now(UTC).isoformat().replace("+00:00", "Z")


def _jsonable(value: Any) -> Any:
    # numpy arrays and scalars expose tolist(); paths and the rest become strings
    if hasattr(value, "tolist"):
        return value.tolist()
    return str(value)


def exception_details(exc: BaseException) -> dict[str, Any]:
    """Type, message and formatted stack of an exception."""
    return {
        "type": type(exc).__name__,
        "message": str(exc),
        "stack_trace": "".join(traceback.format_exception(exc)),
    }


class StructuredLogger:
    """
    Writes one JSON object per line.

    Every entry has timestamp, level, component and message; trace_id is added
    while a job trace is active, context and exception when given. Lines go to
    stderr unless another stream is passed, so command results on stdout stay
    machine-readable, and are appended to REGVAR_LOG_FILE when it is set.
    """

    def __init__(
        self,
        component: str,
        file_path: str | None = None,
        level: str | None = None,
        stream: TextIO | None = None,
    ):
        self.component = component
        self.file_path = file_path if file_path is not None else config.logging.file_path
        self.level = (level or config.logging.level).upper()
        self._stream = stream
        if self.file_path:
            Path(self.file_path).parent.mkdir(parents=True, exist_ok=True)

    def enabled_for(self, level: str) -> bool:
        return _LEVEL_RANK.get(level, 1) >= _LEVEL_RANK.get(self.level, 1)

    def _entry(
        self, level: str, message: str, context: Context, exc: BaseException | None
    ) -> dict[str, Any]:
        entry: dict[str, Any] = {
            "timestamp": _utc_now(),
            "level": level,
            "component": self.component,
            "message": message,
        }
        trace_id = get_current_trace()
        if trace_id:
            entry["trace_id"] = trace_id
        if context:
            entry["context"] = context
        if exc is not None:
            entry["exception"] = exception_details(exc)
        return entry

    def _emit(self, entry: dict[str, Any]) -> None:
        line = json.dumps(entry, default=_jsonable)
        try:
            print(line, file=self._stream or sys.stderr)
            if self.file_path:
                with Path(self.file_path).open("a") as handle:
                    handle.write(line + "\n")
        except OSError as e:
            print(f"Failed to write log: {e}", file=sys.stderr)

    def log(
        self,
        level: str,
        message: str,
        context: Context = None,
        exception: BaseException | None = None,
    ) -> None:
        """Write an entry at `level`; unknown levels count as INFO."""
        level = level.upper()
        if level not in _LEVEL_RANK:
            level = "INFO"
        if self.enabled_for(level):
            self._emit(self._entry(level, message, context, exception))

    def debug(self, message: str, context: Context = None) -> None:
        self.log("DEBUG", message, context)

    def info(self, message: str, context: Context = None) -> None:
        self.log("INFO", message, context)

    def warning(self, message: str, context: Context = None) -> None:
        self.log("WARNING", message, context)

    def error(self, message: str, context: Context = None, exception: BaseException | None = None) -> None:
        self.log("ERROR", message, context, exception)

    def critical(
        self, message: str, context: Context = None, exception: BaseException | None = None
    ) -> None:
        self.log("CRITICAL", message, context, exception)

    @contextmanager
    def timed(self, message: str, context: Context = None, level: str = "INFO") -> Iterator[dict]:
        """
        Log the start of an operation at DEBUG and its completion with duration_ms.

        The yielded dict is the completion context; fields added to it inside the
        block (sizes, step counts) are written with the completion entry. Nothing
        is logged on completion when the block raises.
        """
        fields = dict(context or {})
        self.debug(f"{message}: started", dict(fields))
        start = time.perf_counter()
        yield fields
        fields["duration_ms"] = round((time.perf_counter() - start) * 1000.0, 3)
        self.log(level, message, fields)
