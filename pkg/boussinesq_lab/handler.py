"""
Handler classes for the different log destinations
"""

from __future__ import annotations

import sys
import threading
from abc import ABC, abstractmethod
from io import StringIO
from pathlib import Path
from typing import TYPE_CHECKING, Any, Callable, Optional, TextIO

from .constants import DEFAULT_ENCODING
from .utils import Serializer

if TYPE_CHECKING:
    from .formatter import Formatter
    from .record import Level, LogRecord


class Handler(ABC):
    """Abstract base class for all handlers

    Attributes:
        id: Identifier assigned by the Logger
        sink: Output destination
        level: Minimum level emitted
        formatter: Formatter for text output
        filter_func: Optional predicate on records
        serialize: Emit one JSON object per record instead of text
        catch: Swallow (and report on stderr) errors raised while emitting
    """

    def __init__(
        self,
        sink: Any,
        level: Level,
        formatter: Formatter,
        filter_func: Optional[Callable[[LogRecord], bool]] = None,
        serialize: bool = False,
        catch: bool = True,
    ):
        self.id: int = 0
        self.sink = sink
        self.level = level
        self.formatter = formatter
        self.filter_func = filter_func
        self.serialize = serialize
        self.catch = catch
        self._lock = threading.Lock()

    @abstractmethod
    def write(self, text: str) -> None:
        """Deliver one rendered record to the sink"""

    def should_emit(self, record: LogRecord) -> bool:
        """Check the level threshold and the filter predicate"""
        if record.level < self.level:
            return False
        if self.filter_func is not None:
            try:
                return bool(self.filter_func(record))
            except Exception:
                return True
        return True

    def render(self, record: LogRecord) -> str:
        if self.serialize:
            return Serializer.serialize(record)
        return self.formatter.format(record)

    def emit(self, record: LogRecord) -> None:
        """Render and deliver a record if it passes ``should_emit``"""
        if not self.should_emit(record):
            return
        try:
            with self._lock:
                self.write(self.render(record))
        except Exception as e:
            if not self.catch:
                raise
            sys.stderr.write(f"Error in {type(self).__name__}: {e}\n")

    def close(self) -> None:
        pass


class StreamHandler(Handler):
    """Handler writing to a text stream (stderr by default)"""

    def __init__(self, sink: TextIO, level: Level, formatter: Formatter, **options):
        super().__init__(sink, level, formatter, **options)
        self.stream: TextIO = sink

    def write(self, text: str) -> None:
        self.stream.write(text + "\n")
        self.stream.flush()

    def close(self) -> None:
        """Flush the stream; standard streams and StringIO are never closed"""
        try:
            if self.stream in (sys.stdout, sys.stderr) or isinstance(self.stream, StringIO):
                self.stream.flush()
            else:
                self.stream.close()
        except Exception:
            pass


class FileHandler(Handler):
    """Handler appending to a file, e.g. the ``run.log`` of a run directory

    Attributes:
        path: Log file location; parent directories are created
        mode: 'a' to append or 'w' to truncate
    """

    def __init__(
        self,
        sink: Path,
        level: Level,
        formatter: Formatter,
        mode: str = "a",
        encoding: str = DEFAULT_ENCODING,
        **options,
    ):
        super().__init__(sink, level, formatter, **options)
        self.path = Path(sink)
        self.mode = mode
        self.encoding = encoding
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.file_handle: Optional[TextIO] = open(
            self.path, mode, encoding=encoding, buffering=1
        )

    def write(self, text: str) -> None:
        if self.file_handle is None:
            self.file_handle = open(self.path, "a", encoding=self.encoding, buffering=1)
        self.file_handle.write(text + "\n")

    def close(self) -> None:
        with self._lock:
            if self.file_handle is not None:
                self.file_handle.flush()
                self.file_handle.close()
                self.file_handle = None


class CallableHandler(Handler):
    """Handler invoking a function with the rendered record

    With ``serialize=True`` the function receives a JSON string; tests use
    this to collect structured records.
    """

    def __init__(self, sink: Callable[[str], Any], level: Level, formatter: Formatter, **options):
        if not callable(sink):
            raise TypeError(f"Sink must be callable, got {type(sink)}")
        super().__init__(sink, level, formatter, **options)
        self.func = sink

    def write(self, text: str) -> None:
        self.func(text)
