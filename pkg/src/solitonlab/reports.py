"""Certificate records shared by the estimate, stability and translator modules."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class Constant:
    value: float
    formula: str
    provenance: str = "DERIVED"

    def recompute(self, params: dict) -> float:
        env = {"math": math, "e": math.e, "pi": math.pi, "sqrt": math.sqrt, "exp": math.exp,
               "log": math.log, "max": max, "min": min}
        env.update(params)
        return float(eval(self.formula, {"__builtins__": {}}, env))


@dataclass(frozen=True)
class EstimateReport:
    name: str
    lhs: float
    rhs: float
    passed: bool
    hypothesis_status: str = "holds"
    constants: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    notes: tuple = ()
    operator: str = "shrinker"
    extra: dict = field(default_factory=dict)

    @property
    def inequality_holds(self) -> bool:
        return bool(self.lhs <= self.rhs)

    def verify(self) -> bool:
        """Re-evaluate the recorded inequality and constants."""
        if self.passed and not self.lhs <= self.rhs:
            return False
        for c in self.constants.values():
            if not math.isclose(c.recompute(self.params), c.value, rel_tol=1e-12, abs_tol=1e-300):
                return False
        return True

    def to_dict(self) -> dict:
        return {
            "schema": "estimate.v1",
            "name": self.name,
            "operator": self.operator,
            "lhs": _num(self.lhs),
            "rhs": _num(self.rhs),
            "pass": bool(self.passed),
            "inequality_holds": self.inequality_holds,
            "hypothesis_status": self.hypothesis_status,
            "constants": {k: {"value": _num(c.value), "formula": c.formula, "provenance": c.provenance}
                          for k, c in self.constants.items()},
            "params": _clean(self.params),
            "notes": list(self.notes),
            **{k: _clean(v) for k, v in self.extra.items()},
        }

    def to_json(self) -> str:
        return dumps(self.to_dict())


def make_report(name, lhs, rhs, *, hypothesis_status="holds", constants=None, params=None, notes=(),
                operator="shrinker", extra=None, require_hypothesis=True) -> EstimateReport:
    lhs, rhs = float(lhs), float(rhs)
    ok = lhs <= rhs
    if require_hypothesis and hypothesis_status not in ("holds", "caller-asserted", "not required"):
        ok = False
    return EstimateReport(name=name, lhs=lhs, rhs=rhs, passed=bool(ok), hypothesis_status=hypothesis_status,
                          constants=dict(constants or {}), params=dict(params or {}), notes=tuple(notes),
                          operator=operator, extra=dict(extra or {}))


def _num(x):
    x = float(x)
    if math.isfinite(x):
        return x
    return "inf" if x > 0 else ("-inf" if x < 0 else "nan")


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    return obj


def dumps(doc) -> str:
    return json.dumps(_clean(doc), sort_keys=True, indent=2, allow_nan=False)


@dataclass(frozen=True)
class FunctionalValue:
    value: float
    truncation_tail_bound: float
    region_radius: Optional[float]
    params: dict = field(default_factory=dict)
    name: str = "F"

    def to_dict(self):
        return {"schema": "functional.v1", "name": self.name, "value": _num(self.value),
                "tail_bound": _num(self.truncation_tail_bound), "params": _clean(self.params), "pass": None}
