"""
BoundLogger for context binding

Solver and harness code bind the scenario name once and the step and
simulation time as they advance:

    >>> log = logger.bind(scenario="square_plateau")
    >>> log.bind(step=120, t=0.24).diagnostic("snapshot norms", ll=1.9)
"""

from typing import TYPE_CHECKING, Any, Dict, Union

if TYPE_CHECKING:
    from .logger import Logger


class BoundLogger:
    """A logger view that adds bound context to every record

    Attributes:
        _parent: The Logger that owns the handlers
        _bound_extra: Context merged into each record's extra
    """

    def __init__(self, parent: "Logger", **bound_extra: Any):
        self._parent = parent
        self._bound_extra: Dict[str, Any] = bound_extra

    def bind(self, **kwargs: Any) -> "BoundLogger":
        """Return a new BoundLogger with additional context (later keys win)"""
        return BoundLogger(self._parent, **{**self._bound_extra, **kwargs})

    @property
    def context(self) -> Dict[str, Any]:
        return dict(self._bound_extra)

    def _log(self, level: Union[str, int], message: str, *args: Any, **kwargs: Any) -> None:
        exception = kwargs.pop("exception", None)
        extra = {**self._bound_extra, **kwargs.pop("extra", {})}
        self._parent._log(
            level, message, *args, _depth=3, exception=exception, extra=extra, **kwargs
        )

    def trace(self, message: str, *args: Any, **kwargs: Any) -> None:
        self._log("TRACE", message, *args, **kwargs)

    def debug(self, message: str, *args: Any, **kwargs: Any) -> None:
        self._log("DEBUG", message, *args, **kwargs)

    def diagnostic(self, message: str, *args: Any, **kwargs: Any) -> None:
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
        kwargs.setdefault("exception", True)
        self._log("ERROR", message, *args, **kwargs)

    def log(self, level: Union[str, int], message: str, *args: Any, **kwargs: Any) -> None:
        self._log(level, message, *args, **kwargs)

    def __repr__(self) -> str:
        return f"BoundLogger(context={self._bound_extra!r})"
