"""
Context manager for temporary context binding
"""

from typing import TYPE_CHECKING, Any, Dict

if TYPE_CHECKING:
    from .logger import Logger


class ContextManager:
    """Temporarily add context to the logger's global extra dict

    Used by the harness so every record emitted while a scenario runs
    (including records from library modules that do not bind themselves)
    carries the scenario name.

    Example:
        >>> with logger.contextualize(scenario="euler_disc"):
        ...     run(initial, cfg)
    """

    def __init__(self, logger: "Logger", **context: Any):
        self._logger = logger
        self._context: Dict[str, Any] = context
        self._saved_extra: Dict[str, Any] = {}

    def __enter__(self) -> "Logger":
        self._saved_extra = self._logger.extra.copy()
        self._logger.extra.update(self._context)
        return self._logger

    def __exit__(self, exc_type, exc_val, exc_tb) -> None:
        self._logger.extra = self._saved_extra

    def __repr__(self) -> str:
        return f"ContextManager(context=[{', '.join(self._context)}])"
