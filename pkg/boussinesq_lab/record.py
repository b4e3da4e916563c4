"""
LogRecord and related data structures
"""

from dataclasses import dataclass, field
from datetime import datetime, timedelta
from functools import total_ordering
from types import TracebackType
from typing import Any, Dict, Mapping, Optional, Type


@total_ordering
@dataclass(frozen=True)
class Level:
    """Log level information

    Levels compare and hash by their numeric value only, so a custom level
    registered with the number of a built-in one is treated as the same
    severity.

    Attributes:
        name: The name of the level (e.g., 'INFO', 'DIAGNOSTIC')
        no: The numeric level value (higher = more severe)
        icon: Short marker shown by some formats
    """

    name: str
    no: int
    icon: str = ""

    def __eq__(self, other) -> bool:
        if not isinstance(other, Level):
            return NotImplemented
        return self.no == other.no

    def __lt__(self, other) -> bool:
        if not isinstance(other, Level):
            return NotImplemented
        return self.no < other.no

    def __hash__(self) -> int:
        return hash(self.no)

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class RunContext:
    """Simulation coordinates of a record

    Filled from the bound context keys ``scenario``, ``step`` and ``t``.

    Attributes:
        scenario: Scenario name, if the record was emitted inside a run
        step: Solver step index
        t: Simulation time
    """

    scenario: Optional[str] = None
    step: Optional[int] = None
    t: Optional[float] = None

    @classmethod
    def from_extra(cls, extra: Mapping[str, Any]) -> "RunContext":
        """Build a context from a record's extra dict

        Example:
            >>> RunContext.from_extra({"scenario": "euler_disc", "t": 0.25})
            RunContext(scenario='euler_disc', step=None, t=0.25)
        """
        step = extra.get("step")
        t = extra.get("t")
        return cls(
            scenario=extra.get("scenario"),
            step=int(step) if step is not None else None,
            t=float(t) if t is not None else None,
        )

    def is_empty(self) -> bool:
        return self.scenario is None and self.step is None and self.t is None

    def __str__(self) -> str:
        if self.is_empty():
            return "-"
        parts = [self.scenario or "?"]
        if self.step is not None:
            parts.append(f"step={self.step}")
        if self.t is not None:
            parts.append(f"t={self.t:.4f}")
        return " ".join(parts)


@dataclass(frozen=True)
class ExceptionInfo:
    """Exception captured at logging time

    Attributes:
        type: Exception class
        value: Exception instance
        traceback: Traceback object
    """

    type: Type[BaseException]
    value: BaseException
    traceback: Optional[TracebackType]

    def __str__(self) -> str:
        return f"{self.type.__name__}: {self.value}"


@dataclass
class LogRecord:
    """Complete log record

    Attributes:
        elapsed: Time elapsed since the logger was created
        exception: Exception information when logging an exception
        extra: Bound context and keyword arguments of the call
        function: Function name where the log call happened
        level: Log level
        line: Line number of the call
        message: The formatted message
        name: Module name of the caller
        time: Wall-clock timestamp
        run: Simulation coordinates derived from ``extra``
    """

    elapsed: timedelta
    exception: Optional[ExceptionInfo]
    extra: Dict[str, Any]
    function: str
    level: Level
    line: int
    message: str
    name: str
    time: datetime
    run: RunContext = field(default_factory=RunContext)

    def to_dict(self) -> Dict[str, Any]:
        """Convert the record to a dictionary for serialization

        Returns:
            Dictionary with every record field

        Example:
            >>> data = record.to_dict()
            >>> data["run"]["scenario"]
            'square_plateau'
        """
        result = {
            "elapsed": {
                "seconds": self.elapsed.total_seconds(),
                "repr": str(self.elapsed),
            },
            "exception": None,
            "extra": self.extra.copy(),
            "function": self.function,
            "level": {"name": self.level.name, "no": self.level.no},
            "line": self.line,
            "message": self.message,
            "name": self.name,
            "run": {"scenario": self.run.scenario, "step": self.run.step, "t": self.run.t},
            "time": {
                "timestamp": self.time.timestamp(),
                "repr": self.time.isoformat(),
            },
        }
        if self.exception:
            result["exception"] = {
                "type": self.exception.type.__name__,
                "value": str(self.exception.value),
                "traceback": self.exception.traceback is not None,
            }
        return result

    def __str__(self) -> str:
        return f"[{self.level.name}] {self.message}"
