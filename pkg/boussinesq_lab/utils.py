"""
Utility classes shared by the logger and the artifact writers
"""

import dataclasses
import json
import math
import os
import sys
from datetime import datetime, timedelta
from pathlib import Path
from types import FrameType
from typing import TYPE_CHECKING, Any, Dict, Optional

import numpy as np

if TYPE_CHECKING:
    from .record import LogRecord


class FrameInspector:
    """Inspect stack frames to find where a log call came from"""

    @staticmethod
    def get_caller_frame(depth: int = 0) -> Optional[FrameType]:
        """Get the caller's frame at the specified depth

        Args:
            depth: Frames to go back. 0 = caller of this method.

        Returns:
            Frame object, or None when the stack is not deep enough
        """
        try:
            return sys._getframe(depth + 1)
        except (ValueError, AttributeError):
            return None

    @staticmethod
    def extract_frame_info(frame: Optional[FrameType]) -> Dict[str, Any]:
        """Extract function, line and module from a frame

        Example:
            >>> info = FrameInspector.extract_frame_info(sys._getframe(0))
            >>> info["function"]
            '<module>'
        """
        if frame is None:
            return {
                "file_name": "<unknown>",
                "function": "<unknown>",
                "lineno": 0,
                "module": "<unknown>",
            }
        code = frame.f_code
        return {
            "file_name": os.path.basename(code.co_filename),
            "function": code.co_name,
            "lineno": frame.f_lineno,
            "module": frame.f_globals.get("__name__", "__main__"),
        }


class Serializer:
    """Serialize log records and lab artifacts to JSON

    Handles the types that ``json`` cannot encode on its own:
    - numpy scalars → Python numbers, numpy arrays → nested lists
    - non-finite floats → the strings "inf", "-inf", "nan"
    - datetime → ISO strings, timedelta → seconds
    - dataclasses → dicts, Path → str, exceptions → type and message
    """

    @staticmethod
    def serialize(record: "LogRecord") -> str:
        """Serialize a log record to one JSON line

        Example:
            >>> Serializer.serialize(record)
            '{"elapsed": {...}, "level": {"name": "INFO", "no": 20}, ...}'
        """
        data = record.to_dict()
        try:
            return json.dumps(Serializer.sanitize(data), ensure_ascii=False, allow_nan=False)
        except Exception as e:
            return json.dumps(
                {
                    "level": record.level.name,
                    "message": record.message,
                    "serialization_error": str(e),
                }
            )

    @staticmethod
    def dumps(obj: Any, indent: Optional[int] = None) -> str:
        """Deterministic JSON for artifacts (sorted keys, no NaN literals)"""
        return json.dumps(
            Serializer.sanitize(obj),
            sort_keys=True,
            indent=indent,
            ensure_ascii=False,
            allow_nan=False,
        )

    @staticmethod
    def to_dict(record: "LogRecord") -> Dict[str, Any]:
        return Serializer.sanitize(record.to_dict())

    @staticmethod
    def sanitize(obj: Any) -> Any:
        """Recursively convert an object into JSON-encodable values"""
        if isinstance(obj, dict):
            return {str(key): Serializer.sanitize(value) for key, value in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [Serializer.sanitize(item) for item in obj]
        if isinstance(obj, np.ndarray):
            return Serializer.sanitize(obj.tolist())
        if isinstance(obj, (bool, np.bool_)):
            return bool(obj)
        if isinstance(obj, (int, np.integer)):
            return int(obj)
        if isinstance(obj, (float, np.floating)):
            value = float(obj)
            if math.isfinite(value):
                return value
            return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
        if obj is None or isinstance(obj, str):
            return obj
        if isinstance(obj, datetime):
            return obj.isoformat()
        if isinstance(obj, timedelta):
            return obj.total_seconds()
        if isinstance(obj, Path):
            return str(obj)
        if isinstance(obj, BaseException):
            return {"type": type(obj).__name__, "message": str(obj)}
        if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
            if hasattr(obj, "to_dict"):
                return Serializer.sanitize(obj.to_dict())
            return Serializer.sanitize(dataclasses.asdict(obj))
        try:
            return str(obj)
        except Exception:
            return repr(obj)
