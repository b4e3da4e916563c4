"""
Check reports shared by every verification routine
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional


@dataclass(frozen=True)
class CheckRow:
    """One evaluated inequality lhs <= rhs

    Attributes:
        check: Check id (e.g. 'lp_bounds')
        t: Snapshot time
        p: Integrability index or other row label, NaN when unused
        lhs: Measured side
        rhs: Bound side
        slack: rhs - lhs
        passed: slack >= -tolerance
    """

    check: str
    t: float
    p: float
    lhs: float
    rhs: float
    slack: float
    passed: bool

    @classmethod
    def compare(
        cls,
        check: str,
        t: float,
        lhs: float,
        rhs: float,
        p: float = math.nan,
        tolerance: float = 0.0,
    ) -> "CheckRow":
        slack = float(rhs) - float(lhs)
        return cls(check, float(t), float(p), float(lhs), float(rhs), slack, slack >= -tolerance)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "check": self.check,
            "t": self.t,
            "p": self.p,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "slack": self.slack,
            "passed": self.passed,
        }


@dataclass
class CheckReport:
    """Rows of one check plus its mode and any fitted constant

    Attributes:
        check_id: Check id
        rows: Evaluated inequalities
        mode: 'fit', 'assert' or 'report'
        constant: Constant used (or fitted) for the bound
        notes: Extra scalar results (fitted exponents, R^2, ...)
    """

    check_id: str
    rows: List[CheckRow] = field(default_factory=list)
    mode: str = "report"
    constant: Optional[float] = None
    notes: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)

    @property
    def min_slack(self) -> float:
        return min((row.slack for row in self.rows), default=math.inf)

    def first_violation(self) -> Optional[CheckRow]:
        return next((row for row in self.rows if not row.passed), None)

    def add(self, row: CheckRow) -> None:
        self.rows.append(row)

    def to_dict(self) -> Dict[str, Any]:
        violation = self.first_violation()
        return {
            "check": self.check_id,
            "mode": self.mode,
            "constant": self.constant,
            "passed": self.passed,
            "min_slack": self.min_slack,
            "first_violation": violation.to_dict() if violation else None,
            "notes": dict(self.notes),
            "rows": [row.to_dict() for row in self.rows],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CheckReport":
        rows = [
            CheckRow(
                r["check"],
                float(r["t"]),
                float(r["p"]),
                float(r["lhs"]),
                float(r["rhs"]),
                float(r["slack"]),
                bool(r["passed"]),
            )
            for r in data.get("rows", [])
        ]
        return cls(
            data["check"],
            rows,
            data.get("mode", "report"),
            data.get("constant"),
            data.get("notes", {}),
        )
