"""
Log level definitions
"""

from .record import Level

TRACE = Level(name="TRACE", no=5, icon="·")
DEBUG = Level(name="DEBUG", no=10, icon="d")
# Per-snapshot numerical diagnostics (norms, Grönwall quantities)
DIAGNOSTIC = Level(name="DIAGNOSTIC", no=15, icon="≈")
INFO = Level(name="INFO", no=20, icon="i")
SUCCESS = Level(name="SUCCESS", no=25, icon="✓")
WARNING = Level(name="WARNING", no=30, icon="!")
ERROR = Level(name="ERROR", no=40, icon="✗")
CRITICAL = Level(name="CRITICAL", no=50, icon="‼")

DEFAULT_LEVELS = {
    level.name: level
    for level in (TRACE, DEBUG, DIAGNOSTIC, INFO, SUCCESS, WARNING, ERROR, CRITICAL)
}
