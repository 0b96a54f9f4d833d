"""Deterministic security gate and fail-safe baseline."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

from .agents import MitigationPlan
from .catalog import RESOURCES, Catalog, conflict_count
from .context import BudgetVector
from .optimizer import Portfolio

log = logging.getLogger(__name__)

CATEGORIES = (
    "catalog_membership",
    "set_mismatch",
    "activation_order_mismatch",
    "conflict",
    "resource_feasibility",
)


@dataclass(frozen=True)
class GateVerdict:
    ok: bool
    issues: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if self.ok != (not self.issues):
            raise ValueError("ok must be true exactly when there are no issues")

    @property
    def categories(self) -> list[str]:
        return [c for c, _ in self.issues]

    def messages(self) -> list[str]:
        return [f"{c}: {d}" for c, d in self.issues]

    def to_dict(self) -> dict:
        return {"ok": self.ok, "issues": [{"category": c, "detail": d} for c, d in self.issues]}


def validate_plan(plan: MitigationPlan, Y_det: Portfolio | Sequence[str], order_det: Sequence[str],
                  b: BudgetVector, catalog: Catalog) -> GateVerdict:
    """Run every admissibility check; no short-circuit so all categories are reported."""
    issues: list[tuple[str, str]] = []
    det = set(Y_det.members if isinstance(Y_det, Portfolio) else Y_det)
    ids = list(dict.fromkeys(list(plan.selected_patterns) + list(plan.activation_order)))

    unknown = [p for p in ids if p not in catalog]
    if unknown:
        issues.append(("catalog_membership", f"unknown pattern ids {unknown}"))

    sel = set(plan.selected_patterns)
    if sel != det or len(sel) != len(plan.selected_patterns):
        issues.append(("set_mismatch",
                       f"plan selects {sorted(sel)} but deterministic core chose {sorted(det)}"))

    if list(plan.activation_order) != list(order_det):
        issues.append(("activation_order_mismatch",
                       f"plan order {list(plan.activation_order)} != {list(order_det)}"))

    known = [p for p in ids if p in catalog]
    n_conf = conflict_count(known, catalog)
    if n_conf:
        issues.append(("conflict", f"{n_conf} conflicting pair(s) in plan"))

    totals = [0.0] * len(RESOURCES)
    for pid in sorted(set(known)):
        for r, q in enumerate(catalog.get(pid).cost.as_tuple()):
            totals[r] += q
    over = [f"{r}: {t:g} > {lim:g}" for r, t, lim in zip(RESOURCES, totals, b.as_tuple()) if t > lim]
    if over:
        issues.append(("resource_feasibility", "; ".join(over)))

    return GateVerdict(ok=not issues, issues=tuple(issues))


def failsafe_portfolio(catalog: Catalog, b: BudgetVector) -> tuple[Portfolio, list[str]]:
    """Cheapest baseline pattern that fits ``b``; empty if none fits.

    Cost is compared as the raw component tuple sum, then by id.
    """
    fits = [
        p for p in catalog.baselines()
        if all(q <= lim for q, lim in zip(p.cost.as_tuple(), b.as_tuple()))
    ]
    if not fits:
        log.critical("fail-safe: no baseline pattern fits budgets %s; protection not engaged",
                     b.as_tuple())
        return Portfolio(), []
    best = min(fits, key=lambda p: (sum(p.cost.as_tuple()), p.id))
    return Portfolio(members=(best.id,)), [best.id]
