import pytest

from aspo.agents import MitigationPlan
from aspo.context import BudgetVector
from aspo.gate import CATEGORIES, GateVerdict, failsafe_portfolio, validate_plan

B = BudgetVector(0.58, 0.69, 95.0, 64.0)
Y = ("P03", "P07")
ORDER = ["P03", "P07"]


def cats(plan, catalog, b=B):
    return validate_plan(plan, Y, ORDER, b, catalog).categories


def test_matching_plan_passes(catalog):
    v = validate_plan(MitigationPlan(Y, ORDER), Y, ORDER, B, catalog)
    assert v.ok and v.issues == ()


def test_order_swap(catalog):
    assert cats(MitigationPlan(Y, ["P07", "P03"]), catalog) == ["activation_order_mismatch"]


def test_extra_pattern_is_set_mismatch(catalog):
    c = cats(MitigationPlan(Y + ("P05",), ORDER + ["P05"]), catalog)
    assert "set_mismatch" in c and "catalog_membership" not in c


def test_unknown_pattern(catalog):
    assert "catalog_membership" in cats(MitigationPlan(Y + ("P99",), ORDER + ["P99"]), catalog)


def test_conflict_is_reported(catalog):
    c = cats(MitigationPlan(("P03", "P06", "P07"), ["P03", "P06", "P07"]), catalog)
    assert "conflict" in c and "set_mismatch" in c


def test_all_checks_run_without_short_circuit(catalog):
    tiny = BudgetVector(0.01, 0.01, 1, 1)
    plan = MitigationPlan(("P06", "P07", "P99"), ["P99", "P07", "P06"])
    v = validate_plan(plan, Y, ORDER, tiny, catalog)
    assert set(v.categories) == set(CATEGORIES)
    assert v.categories == [c for c in CATEGORIES if c in v.categories]


def test_budget_overrun(catalog):
    v = validate_plan(MitigationPlan(Y, ORDER), Y, ORDER, BudgetVector(0.58, 0.69, 60, 64), catalog)
    assert v.categories == ["resource_feasibility"]
    assert "lat" in v.issues[0][1]


def test_verdict_consistency():
    with pytest.raises(ValueError):
        GateVerdict(ok=True, issues=(("conflict", "x"),))


def test_failsafe_baseline(catalog):
    y, order = failsafe_portfolio(catalog, B)
    assert y.members == ("P01",) and order == ["P01"]


def test_failsafe_none_fits(catalog, caplog):
    y, order = failsafe_portfolio(catalog, BudgetVector(0, 0, 0, 0))
    assert y.members == () and order == []
    assert any(r.levelname == "CRITICAL" for r in caplog.records)
