"""
Format log records into text lines
"""

import re
import traceback
from datetime import datetime
from typing import TYPE_CHECKING, Any, List, Optional, Tuple

from .constants import DEFAULT_FORMAT

if TYPE_CHECKING:
    from .record import LogRecord

_FIELD = re.compile(r"\{\{|\}\}|\{([^{}:]+)(?::([^{}]*))?\}")


class Formatter:
    """Format log records with a ``str.format``-like template

    Supported:
    - Fields: {time}, {level}, {message}, {run}, {name}, {function}, {line}
    - Nested access: {level.no}, {run.t}, {extra.scenario}
    - Format specs: {level:<10}, {run.t:.3f}, {time:%H:%M:%S} (strftime codes)
    - Escaped braces: {{ and }}

    Attributes:
        format_string: Original template
        tokens: Parsed (literal, field, spec) triples
    """

    def __init__(self, format_string: Optional[str] = None, backtrace: bool = True):
        self.format_string = format_string or DEFAULT_FORMAT
        self.backtrace = backtrace
        self.tokens: List[Tuple[str, Optional[str], Optional[str]]] = self._parse(
            self.format_string
        )

    @staticmethod
    def _parse(template: str) -> List[Tuple[str, Optional[str], Optional[str]]]:
        tokens = []
        position = 0
        for match in _FIELD.finditer(template):
            literal = template[position : match.start()]
            token = match.group(0)
            if token in ("{{", "}}"):
                tokens.append((literal + token[0], None, None))
            else:
                tokens.append((literal, match.group(1).strip(), match.group(2)))
            position = match.end()
        tokens.append((template[position:], None, None))
        return tokens

    def format(self, record: "LogRecord") -> str:
        """Format a record; never raises

        Example:
            >>> Formatter("{level} {run} {message}").format(record)
            'INFO euler_disc step=40 t=0.0800 snapshot written'
        """
        try:
            parts = []
            for literal, field_name, spec in self.tokens:
                parts.append(literal)
                if field_name is not None:
                    value = self.get_field_value(record, field_name)
                    parts.append(self._apply_format_spec(value, spec))
            text = "".join(parts)
            if record.exception:
                exc = record.exception
                lines = (
                    traceback.format_exception(exc.type, exc.value, exc.traceback)
                    if self.backtrace
                    else traceback.format_exception_only(exc.type, exc.value)
                )
                text += "\n" + "".join(lines).rstrip()
            return text
        except Exception as e:
            return f"[{record.level.name}] {record.message} [FORMAT ERROR: {e}]"

    def get_field_value(self, record: "LogRecord", field_name: str) -> Any:
        """Resolve a dotted field name against a record

        Returns ``<missing:name>`` when the path does not resolve.
        """
        obj: Any = record
        for part in field_name.split("."):
            if isinstance(obj, dict):
                if part not in obj:
                    return f"<missing:{field_name}>"
                obj = obj[part]
            elif hasattr(obj, part):
                obj = getattr(obj, part)
            else:
                return f"<missing:{field_name}>"
        return obj

    @staticmethod
    def _apply_format_spec(value: Any, spec: Optional[str]) -> str:
        if not spec:
            return str(value)
        if isinstance(value, datetime):
            return value.strftime(spec) if "%" in spec else format(value, spec)
        try:
            return format(value, spec)
        except (TypeError, ValueError):
            try:
                return format(str(value), spec)
            except (TypeError, ValueError):
                return str(value)
