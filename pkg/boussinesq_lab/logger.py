"""
Core Logger class

The package logs through one process-wide ``logger``. Library modules bind
the simulation context they know about and the harness attaches a
``run.log`` file handler for the duration of each scenario.
"""

import functools
import os
import sys
import threading
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Type, Union

from .bound_logger import BoundLogger
from .constants import DEFAULT_FORMAT, ENV_FORMAT, ENV_LEVEL
from .context_manager import ContextManager
from .exceptions import HandlerNotFoundError, InvalidLevelError
from .formatter import Formatter
from .handler import CallableHandler, FileHandler, Handler, StreamHandler
from .level import DEFAULT_LEVELS
from .record import ExceptionInfo, Level, LogRecord, RunContext
from .utils import FrameInspector


class Logger:
    """Main logger class

    Manages handlers, builds records with caller and run context, and
    dispatches them.

    Attributes:
        handlers: Registered handlers
        levels: Level name → Level
        extra: Global context merged into every record
        start_time: Creation time, origin of ``record.elapsed``

    Example:
        >>> logger = Logger()
        >>> logger.add(sys.stderr, level="DIAGNOSTIC")
        >>> logger.info("grid ready", n=256)
    """

    def __init__(self):
        self.handlers: List[Handler] = []
        self.levels: Dict[str, Level] = DEFAULT_LEVELS.copy()
        self.extra: Dict[str, Any] = {}
        self.start_time = datetime.now()
        self._handler_id_counter = 0
        self._disabled: set = set()
        self._lock = threading.Lock()

    def add(
        self,
        sink: Any,
        level: Union[str, int, Level] = "TRACE",
        format: Optional[str] = None,
        filter: Optional[Callable[[LogRecord], bool]] = None,
        serialize: bool = False,
        backtrace: bool = True,
        catch: bool = True,
        mode: str = "a",
    ) -> int:
        """Add a handler and return its id

        The handler type follows the sink: str or Path → FileHandler,
        object with ``write`` → StreamHandler, callable → CallableHandler.

        Example:
            >>> handler_id = logger.add(run_dir / "run.log", level="DEBUG", mode="w")
            >>> records = []
            >>> logger.add(records.append, serialize=True)
        """
        level_obj = level if isinstance(level, Level) else self._get_level(level)
        formatter = Formatter(format, backtrace=backtrace)
        options = dict(filter_func=filter, serialize=serialize, catch=catch)
        handler: Handler
        if isinstance(sink, (str, Path)):
            handler = FileHandler(Path(sink), level_obj, formatter, mode=mode, **options)
        elif hasattr(sink, "write") and hasattr(sink, "flush"):
            handler = StreamHandler(sink, level_obj, formatter, **options)
        elif callable(sink):
            handler = CallableHandler(sink, level_obj, formatter, **options)
        else:
            raise ValueError(
                f"Invalid sink type: {type(sink)}. Expected str, Path, stream, or callable."
            )
        with self._lock:
            self._handler_id_counter += 1
            handler.id = self._handler_id_counter
            self.handlers.append(handler)
        return handler.id

    def remove(self, handler_id: Optional[int] = None) -> None:
        """Remove one handler by id, or all handlers when id is None

        Raises:
            HandlerNotFoundError: If handler_id is not registered
        """
        with self._lock:
            if handler_id is None:
                for handler in self.handlers:
                    handler.close()
                self.handlers.clear()
                return
            for i, handler in enumerate(self.handlers):
                if handler.id == handler_id:
                    handler.close()
                    self.handlers.pop(i)
                    return
        raise HandlerNotFoundError(handler_id=handler_id)

    def trace(self, message: str, *args: Any, **kwargs: Any) -> None:
        self._log("TRACE", message, *args, **kwargs)

    def debug(self, message: str, *args: Any, **kwargs: Any) -> None:
        self._log("DEBUG", message, *args, **kwargs)

    def diagnostic(self, message: str, *args: Any, **kwargs: Any) -> None:
        """Log per-snapshot numerical diagnostics (level 15)"""
        self._log("DIAGNOSTIC", message, *args, **kwargs)

    def info(self, message: str, *args: Any, **kwargs: Any) -> None:
        self._log("INFO", message, *args, **kwargs)

    def success(self, message: str, *args: Any, **kwargs: Any) -> None:
        self._log("SUCCESS", message, *args, **kwargs)

    def warning(self, message: str, *args: Any, **kwargs: Any) -> None:
        self._log("WARNING", message, *args, **kwargs)

    def error(self, message: str, *args: Any, **kwargs: Any) -> None:
        self._log("ERROR", message, *args, **kwargs)

    def critical(self, message: str, *args: Any, **kwargs: Any) -> None:
        self._log("CRITICAL", message, *args, **kwargs)

    def exception(self, message: str, *args: Any, **kwargs: Any) -> None:
        """Log at ERROR with the exception currently being handled"""
        kwargs.setdefault("exception", True)
        self._log("ERROR", message, *args, **kwargs)

    def log(self, level: Union[str, int], message: str, *args: Any, **kwargs: Any) -> None:
        self._log(level, message, *args, **kwargs)

    def bind(self, **kwargs: Any) -> BoundLogger:
        """Create a BoundLogger carrying ``kwargs`` as context

        Example:
            >>> log = logger.bind(scenario="euler_disc")
            >>> log.bind(step=10, t=0.02).diagnostic("snapshot")
        """
        return BoundLogger(self, **kwargs)

    def contextualize(self, **kwargs: Any) -> ContextManager:
        """Temporarily add context to every record emitted inside a ``with`` block"""
        return ContextManager(self, **kwargs)

    def disable(self, name: str) -> None:
        """Silence records whose caller module starts with ``name``"""
        self._disabled.add(name)

    def enable(self, name: str) -> None:
        self._disabled.discard(name)

    def catch(
        self,
        exception: Union[Type[BaseException], Tuple[Type[BaseException], ...]] = Exception,
        *,
        level: str = "ERROR",
        message: str = "An error occurred",
        reraise: bool = False,
        onerror: Optional[Callable[[BaseException], Any]] = None,
    ) -> Callable:
        """Decorator logging exceptions raised by the wrapped function

        Example:
            >>> @logger.catch(LabError, reraise=True)
            ... def main(argv): ...
        """

        def decorator(func: Callable) -> Callable:
            @functools.wraps(func)
            def wrapper(*args: Any, **kwargs: Any) -> Any:
                try:
                    return func(*args, **kwargs)
                except exception as e:
                    self.log(level, message, exception=e)
                    if onerror is not None:
                        try:
                            onerror(e)
                        except Exception:
                            pass
                    if reraise:
                        raise
                    return None

            return wrapper

        return decorator

    def _is_disabled(self, module: str) -> bool:
        return any(module == name or module.startswith(name + ".") for name in self._disabled)

    def _log(
        self,
        level: Union[str, int],
        message: str,
        *args: Any,
        _depth: int = 2,
        exception: Any = None,
        extra: Optional[Dict[str, Any]] = None,
        **kwargs: Any,
    ) -> None:
        """Build a record and dispatch it

        Keyword arguments both fill named placeholders of ``message`` and
        join the record's extra context.
        """
        level_obj = self._get_level(level)
        frame_info = FrameInspector.extract_frame_info(FrameInspector.get_caller_frame(_depth))
        if self._is_disabled(frame_info["module"]):
            return

        record_extra = self.extra.copy()
        record_extra.update(extra or {})
        record_extra.update(kwargs)
        record = LogRecord(
            elapsed=datetime.now() - self.start_time,
            exception=self._exception_info(exception),
            extra=record_extra,
            function=frame_info["function"],
            level=level_obj,
            line=frame_info["lineno"],
            message=self._format_message(message, args, kwargs),
            name=frame_info["module"],
            time=datetime.now(),
            run=RunContext.from_extra(record_extra),
        )
        self._dispatch_record(record)

    @staticmethod
    def _exception_info(exception: Any) -> Optional[ExceptionInfo]:
        if exception is True:
            exc_type, exc_value, exc_tb = sys.exc_info()
            if exc_type is None:
                return None
            return ExceptionInfo(type=exc_type, value=exc_value, traceback=exc_tb)
        if isinstance(exception, BaseException):
            return ExceptionInfo(
                type=type(exception), value=exception, traceback=exception.__traceback__
            )
        if isinstance(exception, tuple) and len(exception) == 3:
            return ExceptionInfo(type=exception[0], value=exception[1], traceback=exception[2])
        return None

    def _get_level(self, level: Union[str, int]) -> Level:
        """Resolve a level name or number

        Raises:
            InvalidLevelError: For unknown names, numbers or types
        """
        if isinstance(level, str):
            try:
                return self.levels[level.upper()]
            except KeyError:
                raise InvalidLevelError(level) from None
        if isinstance(level, int):
            for lvl in self.levels.values():
                if lvl.no == level:
                    return lvl
        raise InvalidLevelError(level)

    @staticmethod
    def _format_message(message: str, args: tuple, kwargs: Dict[str, Any]) -> str:
        """Apply ``str.format``; a broken template never breaks logging"""
        if not args and not kwargs:
            return message
        try:
            return message.format(*args, **kwargs)
        except (KeyError, IndexError, ValueError) as e:
            return f"{message} [FORMATTING ERROR: {e}]"

    def _dispatch_record(self, record: LogRecord) -> None:
        for handler in list(self.handlers):
            try:
                handler.emit(record)
            except Exception as e:
                if not handler.catch:
                    raise
                sys.stderr.write(f"Error in handler {handler.id} ({type(handler).__name__}): {e}\n")


logger = Logger()

# Console output only; run directories get their own run.log from the harness
try:
    logger.add(
        sys.stderr,
        level=os.environ.get(ENV_LEVEL, "INFO"),
        format=os.environ.get(ENV_FORMAT, DEFAULT_FORMAT),
    )
except Exception:
    logger.add(sys.stderr, level="INFO")
