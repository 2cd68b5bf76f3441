"""Verification report records and deterministic JSON emission."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict


@dataclass
class VerificationReport:
    """One checked property: pass iff worst_violation <= tolerance."""

    prop: str
    worst_violation: float
    tolerance: float
    location: tuple | None = None
    citation: str = ""
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.worst_violation <= self.tolerance

    def to_dict(self):
        d = asdict(self)
        d["pass"] = self.passed
        d["property"] = d.pop("prop")
        if d["location"] is not None:
            d["location"] = list(d["location"])
        return d

    def __str__(self):
        state = "PASS" if self.passed else "FAIL"
        return (f"[{state}] {self.prop}: worst={self.worst_violation:.6g} "
                f"tol={self.tolerance:.6g}")


def report_json(reports, extra=None):
    """Deterministic JSON for a list of reports (sorted keys, repr floats)."""
    payload = {"reports": [r.to_dict() for r in reports]}
    if extra:
        payload.update(extra)
    return json.dumps(payload, sort_keys=True, indent=2)


def all_pass(reports):
    return all(r.passed for r in reports)
