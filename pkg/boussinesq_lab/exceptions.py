"""
Custom exceptions for boussinesq_lab

Every error raised by the laboratory inherits from LabError, so callers can
catch the whole family with a single except clause. The CLI maps the
subclasses onto exit codes.
"""

from typing import Any, List, Optional, Sequence


class LabError(Exception):
    """Base exception for all laboratory errors

    Example:
        >>> try:
        ...     run_scenario(cfg)
        ... except LabError as e:
        ...     print(f"Lab error: {e}")
    """

    pass


class HandlerNotFoundError(LabError):
    """Raised when removing a log handler that doesn't exist

    Example:
        >>> logger.remove(999)
        HandlerNotFoundError: Handler with ID 999 not found
    """

    def __init__(self, handler_id: int):
        self.handler_id = handler_id
        super().__init__(f"Handler with ID {handler_id} not found")


class InvalidLevelError(LabError):
    """Raised when an unknown log level is requested"""

    def __init__(self, level: Any):
        self.level = level
        super().__init__(f"Invalid log level: {level}")


class ConfigurationError(LabError):
    """Raised when a grid, solver setting or scenario file is invalid

    All violations are collected before raising so a user sees every
    problem in one pass.

    Attributes:
        violations: Human readable list of every violated rule

    Example:
        >>> parse_config("bad.cfg")
        ConfigurationError: invalid scenario bad.cfg (3 violations)
          - [patch] section is missing
          - grid.n = 100 must be a power of two >= 16
          - analysis.eps = 1.2 outside the Hölder range 0 < ε < 1
    """

    def __init__(self, message: str, violations: Optional[Sequence[str]] = None):
        self.violations: List[str] = list(violations or [])
        text = message
        if self.violations:
            text += f" ({len(self.violations)} violation{'s' if len(self.violations) > 1 else ''})"
            text += "".join(f"\n  - {v}" for v in self.violations)
        super().__init__(text)


class DomainError(LabError):
    """Raised when an argument lies outside the domain of a formula

    Example:
        >>> delta_scale(0.5, 0.0)
        DomainError: h = 0.5 outside (0, 1/e]
    """

    pass


class DegeneracyError(LabError):
    """Raised when a vector-field family vanishes simultaneously somewhere

    Attributes:
        witness: Grid point (x1, x2) realizing the infimum of max |X_lambda|
        value: The infimum I itself
    """

    def __init__(self, witness: Sequence[float], value: float = 0.0):
        self.witness = (float(witness[0]), float(witness[1]))
        self.value = float(value)
        super().__init__(
            f"family is degenerate: I = {self.value:.3e} at witness "
            f"({self.witness[0]:.6f}, {self.witness[1]:.6f})"
        )


class DivergenceError(LabError):
    """Raised when a solver field becomes NaN or infinite

    Attributes:
        step: Index of the failing step
        t: Time of the last good state
        last_state: Last finite State, persisted by the harness
        partial: Series recorded up to the failure (set by ``run``)
    """

    def __init__(self, step: int, t: float, last_state: Any = None):
        self.step = step
        self.t = t
        self.last_state = last_state
        self.partial: Any = None
        super().__init__(f"non-finite field at step {step} (last good t = {t:.6g})")


class CFLViolationError(LabError):
    """Raised when the Courant bound still fails after every allowed dt halving"""

    def __init__(self, cfl: float, dt: float, cfl_max: float):
        self.cfl = cfl
        self.dt = dt
        self.cfl_max = cfl_max
        self.partial: Any = None
        super().__init__(f"CFL {cfl:.3f} > {cfl_max} even at dt = {dt:.3e}")


class InsufficientDataError(LabError):
    """Raised when an estimator has too few samples to regress on"""

    def __init__(self, available: int, required: int, what: str = "points"):
        self.available = available
        self.required = required
        super().__init__(f"only {available} {what} available, {required} required")


class ConstructionError(LabError):
    """Raised when initial data or a frame family cannot be built as requested"""

    pass


class FitError(LabError):
    """Raised when a regression or calibration has no usable data"""

    pass


class CheckFailedError(LabError):
    """Raised when an assert-mode check fails on a persisted run"""

    def __init__(self, check_id: str, t: float, detail: str = ""):
        self.check_id = check_id
        self.t = t
        super().__init__(f"check {check_id} violated at t = {t:.6g} {detail}".rstrip())


class ChecksumError(LabError):
    """Raised when an artifact on disk does not match its recorded sha256

    Attributes:
        path: The offending file
    """

    def __init__(self, path: Any, expected: str = "", actual: str = ""):
        self.path = str(path)
        self.expected = expected
        self.actual = actual
        super().__init__(f"checksum mismatch for {self.path}")
