import json
import math

import pytest

from solitonlab.reports import Constant, FunctionalValue, dumps, make_report


def test_constant_recompute():
    c = Constant(4 * math.pi, "(4*pi)**(n/2)")
    assert c.recompute({"n": 2}) == pytest.approx(c.value, rel=1e-15)
    with pytest.raises(Exception):
        Constant(1.0, "__import__('os')").recompute({})


def test_pass_requires_hypothesis():
    assert make_report("x", 1.0, 2.0).passed
    assert not make_report("x", 3.0, 2.0).passed
    r = make_report("x", 1.0, 2.0, hypothesis_status="fails")
    assert not r.passed and r.inequality_holds
    assert make_report("x", 1.0, 2.0, hypothesis_status="fails", require_hypothesis=False).passed


def test_report_json_schema():
    r = make_report("x", 1.0, math.inf, constants={"C": Constant(2.0, "2.0")}, params={"n": 2})
    doc = json.loads(r.to_json())
    assert doc["schema"] == "estimate.v1"
    assert doc["rhs"] == "inf" and doc["pass"] is True
    assert doc["constants"]["C"] == {"value": 2.0, "formula": "2.0", "provenance": "DERIVED"}
    assert r.verify()


def test_verify_detects_tampering():
    r = make_report("x", 1.0, 2.0, constants={"C": Constant(3.0, "2.0")})
    assert not r.verify()


def test_functional_value_schema():
    doc = FunctionalValue(1.0, 0.0, None, {"t0": 1.0}).to_dict()
    assert doc["schema"] == "functional.v1" and doc["pass"] is None
    assert dumps(doc) == dumps(dict(reversed(list(doc.items()))))
