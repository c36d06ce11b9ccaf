"""Solver reports and their JSON/CSV projections."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any

from .evaluate import EvalResult
from .instance import Assignment


class BracketError(RuntimeError):
    """No feasible scale was found in the binary-search bracket."""


@dataclass
class Check:
    name: str
    value: float
    bound: float
    passed: bool
    note: str = ""

    @classmethod
    def le(cls, name: str, value: float, bound: float, note: str = "") -> "Check":
        return cls(name, float(value), float(bound), bool(value <= bound), note)

    def to_dict(self) -> dict:
        return {"name": self.name, "value": _num(self.value), "bound": _num(self.bound),
                "passed": self.passed, "note": self.note}


@dataclass
class SolveReport:
    objective: str
    scale: float
    bracket: tuple[float, float]
    trace: list[dict]
    assignment: Assignment
    checks: list[Check] = field(default_factory=list)
    evaluation: EvalResult | None = None
    params: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    lp_model: Any = None  # final LP, kept for debug dumps; not serialized

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "params": _clean(self.params),
            "scale": _num(self.scale),
            "bracket": [_num(self.bracket[0]), _num(self.bracket[1])],
            "trace": _clean(self.trace),
            "placement": dict(sorted(self.assignment.placement.items())),
            "checks": [c.to_dict() for c in self.checks],
            "all_checks_passed": self.passed,
            "evaluation": self.evaluation.to_dict() if self.evaluation else None,
            "details": _clean(self.details),
            "notes": list(self.notes),
        }


def _num(v):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def _clean(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "item") and callable(obj.item):  # numpy scalars
        return _clean(obj.item())
    if isinstance(obj, float):
        return _num(obj)
    return obj


def dumps_json(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def solve_report_csv(doc: dict) -> str:
    """Flat key,value projection of a solve report."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["key", "value"])
    w.writerow(["objective", doc["objective"]])
    w.writerow(["scale", doc["scale"]])
    for k, v in doc["params"].items():
        w.writerow([f"param.{k}", v])
    for job, i in doc["placement"].items():
        w.writerow([f"placement.{job}", i])
    for c in doc["checks"]:
        w.writerow([f"check.{c['name']}", "pass" if c["passed"] else "fail"])
    if doc.get("evaluation"):
        for k, v in doc["evaluation"].items():
            w.writerow([f"evaluation.{k}", v])
    return buf.getvalue()
