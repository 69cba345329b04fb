"""Check results shared by part validation, assembly verification and the router."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

CODE = "CODE"
DESIGN = "DESIGN"
EXEC = "EXEC"


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    cls: str | None = None  # CODE or DESIGN when failing
    evidence: str = ""
    payload: dict[str, Any] = field(default_factory=dict)
    part: str | None = None

    def to_json(self) -> dict:
        out = {
            "name": self.name,
            "pass": self.passed,
            "class": self.cls,
            "evidence": self.evidence,
            "payload": self.payload,
        }
        if self.part is not None:
            out["part"] = self.part
        return out


@dataclass
class Report:
    checks: list[Check] = field(default_factory=list)

    def extend(self, checks) -> None:
        self.checks.extend(checks)

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_json(self) -> dict:
        return {"pass": self.passed, "checks": [c.to_json() for c in self.checks]}
